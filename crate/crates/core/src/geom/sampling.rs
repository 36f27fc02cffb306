use std::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;

use super::{GeomError, Pose, UnitQuat, Vec3};

/// Two unit vectors completing `axis` to a right-handed orthonormal frame.
pub fn orthonormal_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

/// Uniform sample from the spherical-cone shell around `axis`.
///
/// Directions are uniform over the cap's solid angle and the radius is
/// uniform in volume between `r_min` and `r_max`.
pub fn sample_in_cone<R: Rng + ?Sized>(
    apex: &Vec3,
    axis: &Vec3,
    half_angle: f64,
    r_min: f64,
    r_max: f64,
    rng: &mut R,
) -> Result<Vec3, GeomError> {
    if !(half_angle > 0.0 && half_angle <= FRAC_PI_2) {
        return Err(GeomError::InvalidRange(format!(
            "cone half angle {half_angle} not in (0, pi/2]"
        )));
    }
    if !(r_min > 0.0 && r_min <= r_max && r_max.is_finite()) {
        return Err(GeomError::InvalidRange(format!(
            "radial range [{r_min}, {r_max}]"
        )));
    }
    let n = axis.norm();
    if !(n > 1e-12 && n.is_finite()) {
        return Err(GeomError::InvalidRange("cone axis has zero length".into()));
    }
    let a = axis / n;
    let (e1, e2) = orthonormal_basis(&a);
    let cos_max = half_angle.cos();
    let cos_t = 1.0 - rng.gen::<f64>() * (1.0 - cos_max);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = rng.gen::<f64>() * TAU;
    let dir = a * cos_t + (e1 * phi.cos() + e2 * phi.sin()) * sin_t;
    let r = if r_min == r_max {
        r_min
    } else {
        let (lo, hi) = (r_min.powi(3), r_max.powi(3));
        (lo + rng.gen::<f64>() * (hi - lo)).cbrt()
    };
    Ok(apex + dir * r)
}

/// Uniform point in the axis-aligned box `[min, max]`.
pub fn uniform_in_box<R: Rng + ?Sized>(min: &Vec3, max: &Vec3, rng: &mut R) -> Vec3 {
    Vec3::new(
        lerp_scalar_rand(min.x, max.x, rng),
        lerp_scalar_rand(min.y, max.y, rng),
        lerp_scalar_rand(min.z, max.z, rng),
    )
}

fn lerp_scalar_rand<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    lo + rng.gen::<f64>() * (hi - lo)
}

/// Ballistic flight from `start` to `end` under gravity along `-z`.
///
/// Produces `round(flight_time * fps) + 1` poses (at least two) evenly spaced
/// in time over `[0, flight_time]`; the first and last positions are `start`
/// and `end` exactly. Orientation is slerped from `q_start` to `q_end`.
pub fn parabola(
    start: &Vec3,
    end: &Vec3,
    q_start: &UnitQuat,
    q_end: &UnitQuat,
    flight_time: f64,
    gravity: f64,
    fps: f64,
) -> Result<Vec<Pose>, GeomError> {
    if !(flight_time > 0.0 && flight_time.is_finite()) {
        return Err(GeomError::InvalidRange(format!(
            "flight time {flight_time} must be positive"
        )));
    }
    if !(fps > 0.0) {
        return Err(GeomError::InvalidRange(format!("fps {fps} must be positive")));
    }
    let frames = ((flight_time * fps).round() as usize).max(1) + 1;
    let accel = Vec3::new(0.0, 0.0, -gravity);
    let v0 = (end - start) / flight_time - accel * (0.5 * flight_time);
    let last = (frames - 1) as f64;
    Ok((0..frames)
        .map(|k| {
            let u = k as f64 / last;
            let position = if k == 0 {
                *start
            } else if k == frames - 1 {
                *end
            } else {
                let t = flight_time * u;
                start + v0 * t + accel * (0.5 * t * t)
            };
            Pose::new(position, q_start.slerp(q_end, u))
        })
        .collect())
}
