//! Incremental 3D convex hull with coplanar triangles merged into facets.

use std::collections::HashSet;

use super::SceneError;
use crate::geom::Vec3;

/// A planar face of the hull: `normal . x = offset` with `normal` outward.
#[derive(Clone, Debug)]
pub struct Facet {
    pub normal: Vec3,
    pub offset: f64,
    /// Vertex indices ordered counter-clockwise seen from outside.
    pub polygon: Vec<usize>,
}

impl Facet {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

#[derive(Clone, Debug)]
pub struct ConvexHull {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    facets: Vec<Facet>,
}

impl ConvexHull {
    pub fn new(points: &[Vec3]) -> Result<Self, SceneError> {
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(SceneError::DegenerateHull("non-finite point".into()));
        }
        if points.len() < 4 {
            return Err(SceneError::DegenerateHull(format!(
                "{} points cannot span a volume",
                points.len()
            )));
        }
        let (lo, hi) = points.iter().fold(
            (Vec3::repeat(f64::MAX), Vec3::repeat(f64::MIN)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let extent = (hi - lo).norm();
        if extent <= 0.0 {
            return Err(SceneError::DegenerateHull("all points coincide".into()));
        }
        let eps = 1e-10 * extent.max(1e-3);
        let (tris, used) = build_triangles(points, eps)?;

        // compact to the vertices actually on the hull
        let mut remap = vec![usize::MAX; points.len()];
        let mut vertices = Vec::new();
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = vertices.len();
                vertices.push(points[i]);
            }
        }
        let triangles: Vec<[usize; 3]> = tris
            .iter()
            .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
            .collect();
        let hull = Self::from_parts(vertices, triangles, eps);
        if hull.volume() <= eps * extent * extent {
            return Err(SceneError::DegenerateHull("zero volume".into()));
        }
        Ok(hull)
    }

    fn from_parts(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, eps: f64) -> Self {
        let facets = merge_facets(&vertices, &triangles, eps);
        Self {
            vertices,
            triangles,
            facets,
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn vertex_centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Uniform scale about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            triangles: self.triangles.clone(),
            facets: self
                .facets
                .iter()
                .map(|f| Facet {
                    normal: f.normal,
                    offset: f.offset * s,
                    polygon: f.polygon.clone(),
                })
                .collect(),
        }
    }

    /// Signed Euclidean distance to the hull boundary; negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let plane = self
            .facets
            .iter()
            .map(|f| f.signed_distance(p))
            .fold(f64::MIN, f64::max);
        if plane <= 0.0 {
            return plane;
        }
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::MAX, f64::min)
    }
}

fn build_triangles(points: &[Vec3], eps: f64) -> Result<(Vec<[usize; 3]>, Vec<bool>), SceneError> {
    let n = points.len();
    let i0 = (0..n)
        .min_by(|&a, &b| points[a].x.total_cmp(&points[b].x))
        .unwrap();
    let i1 = (0..n)
        .max_by(|&a, &b| {
            (points[a] - points[i0])
                .norm_squared()
                .total_cmp(&(points[b] - points[i0]).norm_squared())
        })
        .unwrap();
    let dir = (points[i1] - points[i0]).normalize();
    let line_dist = |k: usize| {
        let v = points[k] - points[i0];
        (v - dir * v.dot(&dir)).norm()
    };
    let i2 = (0..n).max_by(|&a, &b| line_dist(a).total_cmp(&line_dist(b))).unwrap();
    if line_dist(i2) <= eps {
        return Err(SceneError::DegenerateHull("points are collinear".into()));
    }
    let plane_n = (points[i1] - points[i0])
        .cross(&(points[i2] - points[i0]))
        .normalize();
    let plane_dist = |k: usize| plane_n.dot(&(points[k] - points[i0]));
    let i3 = (0..n)
        .max_by(|&a, &b| plane_dist(a).abs().total_cmp(&plane_dist(b).abs()))
        .unwrap();
    if plane_dist(i3).abs() <= eps {
        return Err(SceneError::DegenerateHull("points are coplanar".into()));
    }

    let centroid = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    let mut faces: Vec<[usize; 3]> = [[i0, i1, i2], [i0, i1, i3], [i1, i2, i3], [i2, i0, i3]]
        .into_iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| points[i]);
            if (b - a).cross(&(c - a)).dot(&(centroid - a)) > 0.0 {
                [f[0], f[2], f[1]]
            } else {
                f
            }
        })
        .collect();
    let mut used = vec![false; n];
    for i in [i0, i1, i2, i3] {
        used[i] = true;
    }

    let outside = |f: &[usize; 3], p: &Vec3| -> f64 {
        let [a, b, c] = f.map(|i| points[i]);
        let nrm = (b - a).cross(&(c - a));
        let len = nrm.norm();
        nrm.dot(&(p - a)) / len
    };

    for k in 0..n {
        if used[k] {
            continue;
        }
        let p = points[k];
        let visible: Vec<bool> = faces.iter().map(|f| outside(f, &p) > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let visible_edges: HashSet<(usize, usize)> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, &v)| v)
            .flat_map(|(f, _)| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .collect();
        let horizon: Vec<(usize, usize)> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, &v)| v)
            .flat_map(|(f, _)| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .filter(|&(a, b)| !visible_edges.contains(&(b, a)))
            .collect();
        let mut next: Vec<[usize; 3]> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, &v)| !v)
            .map(|(f, _)| *f)
            .collect();
        next.extend(horizon.into_iter().map(|(a, b)| [a, b, k]));
        faces = next;
        used[k] = true;
    }

    // vertices swallowed by later insertions are no longer referenced
    let mut referenced = vec![false; n];
    for f in &faces {
        for &i in f {
            referenced[i] = true;
        }
    }
    Ok((faces, referenced))
}

fn merge_facets(vertices: &[Vec3], triangles: &[[usize; 3]], eps: f64) -> Vec<Facet> {
    let mut facets: Vec<(Vec3, f64, Vec<usize>)> = Vec::new();
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i]);
        let normal = (b - a).cross(&(c - a)).normalize();
        let offset = normal.dot(&a);
        let existing = facets.iter_mut().find(|(n, d, _)| {
            n.dot(&normal) > 1.0 - 1e-9 && (d - offset).abs() <= 10.0 * eps
        });
        match existing {
            Some((_, _, verts)) => {
                for &i in t {
                    if !verts.contains(&i) {
                        verts.push(i);
                    }
                }
            }
            None => facets.push((normal, offset, t.to_vec())),
        }
    }
    facets
        .into_iter()
        .map(|(normal, _, verts)| {
            // refit the plane through all member vertices
            let offset = verts.iter().map(|&i| normal.dot(&vertices[i])).fold(f64::MIN, f64::max);
            Facet {
                polygon: order_polygon(vertices, &verts, &normal),
                normal,
                offset,
            }
        })
        .collect()
}

/// Counter-clockwise (about `normal`) convex polygon through `verts`.
fn order_polygon(vertices: &[Vec3], verts: &[usize], normal: &Vec3) -> Vec<usize> {
    let (e1, e2) = crate::geom::orthonormal_basis(normal);
    let mut pts: Vec<(f64, f64, usize)> = verts
        .iter()
        .map(|&i| (vertices[i].dot(&e1), vertices[i].dot(&e2), i))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let cross = |o: &(f64, f64, usize), a: &(f64, f64, usize), b: &(f64, f64, usize)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64, usize)> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<(f64, f64, usize)> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.into_iter().chain(upper).map(|p| p.2).collect()
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub(crate) fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}
