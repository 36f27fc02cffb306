use super::{unit_parameters, GeomError, Vec3};

/// Piecewise cubic Bezier through a sequence of anchors.
///
/// Segment `i` joins anchors `i` and `i + 1`. Its inner control points are
/// `a[i] + s * m[i]` and `a[i + 1] - s * m[i + 1]`, where `m` is the central
/// difference `a[i + 1] - a[i - 1]` (one-sided at the two ends) and `s` is the
/// tangent scale. With `s = 1/6` this is the Catmull-Rom spline.
#[derive(Clone, Debug)]
pub struct BezierPath {
    segments: Vec<[Vec3; 4]>,
}

impl BezierPath {
    pub fn through(anchors: &[Vec3], tangent_scale: f64) -> Result<Self, GeomError> {
        if anchors.len() < 2 {
            return Err(GeomError::TooFew {
                what: "bezier anchors",
                needed: 2,
                got: anchors.len(),
            });
        }
        if let Some(i) = anchors
            .iter()
            .position(|a| !a.iter().all(|c| c.is_finite()))
        {
            return Err(GeomError::NonFiniteAnchor(i));
        }
        let n = anchors.len();
        let tangent = |i: usize| -> Vec3 {
            if i == 0 {
                anchors[1] - anchors[0]
            } else if i == n - 1 {
                anchors[n - 1] - anchors[n - 2]
            } else {
                anchors[i + 1] - anchors[i - 1]
            }
        };
        let segments = (0..n - 1)
            .map(|i| {
                [
                    anchors[i],
                    anchors[i] + tangent(i) * tangent_scale,
                    anchors[i + 1] - tangent(i + 1) * tangent_scale,
                    anchors[i + 1],
                ]
            })
            .collect();
        Ok(Self { segments })
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn control_points(&self, segment: usize) -> &[Vec3; 4] {
        &self.segments[segment]
    }

    /// Evaluate segment `segment` at `u` in `[0, 1]` (Bernstein form).
    pub fn eval(&self, segment: usize, u: f64) -> Vec3 {
        let [p0, p1, p2, p3] = &self.segments[segment];
        if u <= 0.0 {
            return *p0;
        }
        if u >= 1.0 {
            return *p3;
        }
        let v = 1.0 - u;
        // offsets from p0 keep a degenerate (all-equal) curve exactly constant
        p0 + (p1 - p0) * (3.0 * v * v * u) + (p2 - p0) * (3.0 * v * u * u) + (p3 - p0) * (u * u * u)
    }

    /// `samples_per_segment` evenly spaced parameters per segment, with the
    /// repeated first sample of every later segment dropped.
    pub fn sample(&self, samples_per_segment: usize) -> Vec<Vec3> {
        let params = unit_parameters(samples_per_segment);
        let mut out = Vec::with_capacity(self.segments.len() * samples_per_segment);
        for seg in 0..self.segments.len() {
            let skip = usize::from(seg > 0);
            out.extend(params.iter().skip(skip).map(|&u| self.eval(seg, u)));
        }
        out
    }
}

/// Dense samples of the piecewise cubic through `anchors`.
pub fn cubic_bezier(
    anchors: &[Vec3],
    tangent_scale: f64,
    samples_per_keypoint: usize,
) -> Result<Vec<Vec3>, GeomError> {
    if samples_per_keypoint < 2 {
        return Err(GeomError::TooFew {
            what: "samples per keypoint",
            needed: 2,
            got: samples_per_keypoint,
        });
    }
    Ok(BezierPath::through(anchors, tangent_scale)?.sample(samples_per_keypoint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn de_casteljau(ctrl: &[Vec3; 4], u: f64) -> Vec3 {
        let mut pts = ctrl.to_vec();
        while pts.len() > 1 {
            pts = pts.windows(2).map(|w| w[0] + (w[1] - w[0]) * u).collect();
        }
        pts[0]
    }

    #[test]
    fn two_collinear_anchors_stay_on_segment() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(2.0, 1.0, -1.0);
        let pts = cubic_bezier(&[a, b], 1.0 / 6.0, 25).unwrap();
        assert_eq!(pts.len(), 25);
        let dir = (b - a).normalize();
        for p in &pts {
            let along = (p - a).dot(&dir);
            assert!((-1e-12..=(b - a).norm() + 1e-12).contains(&along));
            assert_abs_diff_eq!((p - a - dir * along).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_collinear_anchors_on_x_axis() {
        let anchors = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        let pts = cubic_bezier(&anchors, 1.0 / 6.0, 10).unwrap();
        let dev = pts.iter().map(|p| p.y.abs().max(p.z.abs())).fold(0.0, f64::max);
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn right_angle_matches_de_casteljau() {
        let a0 = Vec3::new(0.0, 0.0, 0.0);
        let a1 = Vec3::new(1.0, 0.0, 0.0);
        let a2 = Vec3::new(1.0, 1.0, 0.0);
        let s = 1.0 / 6.0;
        // hand-built control points: tangents (a1-a0), (a2-a0), (a2-a1)
        let seg0 = [a0, a0 + (a1 - a0) * s, a1 - (a2 - a0) * s, a1];
        let seg1 = [a1, a1 + (a2 - a0) * s, a2 - (a2 - a1) * s, a2];
        let pts = cubic_bezier(&[a0, a1, a2], s, 10).unwrap();
        assert_eq!(pts.len(), 19);
        assert_eq!(pts[0], a0);
        assert_eq!(pts[9], a1);
        assert_eq!(pts[18], a2);
        for j in 0..10 {
            let u = j as f64 / 9.0;
            assert_abs_diff_eq!(pts[j], de_casteljau(&seg0, u), epsilon = 1e-12);
            assert_abs_diff_eq!(pts[9 + j], de_casteljau(&seg1, u), epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(cubic_bezier(&[Vec3::zeros()], 0.2, 10).is_err());
        assert!(cubic_bezier(&[Vec3::zeros(), Vec3::x()], 0.2, 1).is_err());
        assert_eq!(
            cubic_bezier(&[Vec3::zeros(), Vec3::new(f64::NAN, 0.0, 0.0)], 0.2, 4).unwrap_err(),
            GeomError::NonFiniteAnchor(1)
        );
    }

    #[test]
    fn passes_through_every_anchor() {
        let anchors: Vec<Vec3> = (0..6)
            .map(|i| {
                let t = i as f64;
                Vec3::new(t.cos(), (2.0 * t).sin(), 0.3 * t)
            })
            .collect();
        let pts = cubic_bezier(&anchors, 0.25, 7).unwrap();
        for (i, a) in anchors.iter().enumerate() {
            assert_eq!(pts[i * 6], *a);
        }
    }
}
