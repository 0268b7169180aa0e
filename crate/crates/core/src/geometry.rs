//! Small linear-algebra helpers: axis-angle rotations, boxes, rigid fits.

use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use std::f64::consts::PI;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Rotation matrix of an axis-angle vector. The zero vector maps to the exact
/// identity.
pub fn rotation_from_axis_angle(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    if theta2 == 0.0 {
        return Mat3::identity();
    }
    let k = skew(w);
    if theta2 < 1e-16 {
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let theta = theta2.sqrt();
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta2;
    Mat3::identity() + a * k + b * k * k
}

/// Partial derivatives `dR/dw_i` of [`rotation_from_axis_angle`].
pub fn rotation_jacobian(w: &Vec3) -> [Mat3; 3] {
    let theta2 = w.norm_squared();
    let basis = [Vec3::x(), Vec3::y(), Vec3::z()];
    if theta2 < 1e-14 {
        // First-order expansion around the identity.
        let k = skew(w);
        return basis.map(|e| {
            let ek = skew(&e);
            ek + 0.5 * (ek * k + k * ek)
        });
    }
    let r = rotation_from_axis_angle(w);
    let wx = skew(w);
    let i_minus_r = Mat3::identity() - r;
    let mut out = [Mat3::zeros(); 3];
    for (i, e) in basis.iter().enumerate() {
        let v = w.cross(&(i_minus_r * e));
        out[i] = (w[i] * wx + skew(&v)) / theta2 * r;
    }
    out
}

/// Axis-angle vector of a rotation matrix, with magnitude in `[0, pi]`.
pub fn axis_angle_from_rotation(r: &Mat3) -> Vec3 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let v = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if theta < 1e-6 {
        return 0.5 * v;
    }
    if PI - theta > 1e-4 {
        return v * (theta / (2.0 * theta.sin()));
    }
    // Near pi the antisymmetric part vanishes; read the axis off R + I.
    let b = (r + Mat3::identity()) * 0.5;
    let col = (0..3)
        .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vec3 = b.column(col).into();
    axis /= axis.norm();
    if axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Maps an axis-angle vector to the equivalent one with magnitude at most pi.
/// Vectors already inside the pi-ball are returned unchanged.
pub fn canonical_axis_angle(w: &Vec3) -> Vec3 {
    let theta = w.norm();
    if theta <= PI {
        return *w;
    }
    let axis = w / theta;
    let reduced = theta.rem_euclid(2.0 * PI);
    if reduced > PI {
        -axis * (2.0 * PI - reduced)
    } else {
        axis * reduced
    }
}

/// Among the representations `w + 2*pi*k*axis(w)`, returns the one closest to
/// `reference`. Used before blending axis-angle vectors.
pub fn align_axis_angle(w: &Vec3, reference: &Vec3) -> Vec3 {
    let theta = w.norm();
    if theta < 1e-12 {
        return *w;
    }
    let axis = w / theta;
    let mut best = *w;
    let mut best_d = (w - reference).norm_squared();
    for k in [-1.0, 1.0] {
        let cand = w + axis * (2.0 * PI * k);
        let d = (cand - reference).norm_squared();
        if d < best_d {
            best = cand;
            best_d = d;
        }
    }
    best
}

/// Angle in radians of the relative rotation between two rotations.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a.transpose() * b;
    ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

/// Least-squares rigid transform `(R, t)` with `R * src + t ~ dst` (Kabsch).
pub fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> Option<(Mat3, Vec3)> {
    if src.len() != dst.len() || src.len() < 3 {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Mat3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut d = Mat3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v_t.transpose() * d * u.transpose();
    Some((r, cd - r * cs))
}

/// Smallest eigenvalue/eigenvector of a symmetric 3x3 matrix.
pub fn smallest_eigenvector(m: &Mat3) -> Vec3 {
    let eig = SymmetricEigen::new(*m);
    let i = eig.eigenvalues.imin();
    eig.eigenvectors.column(i).into()
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in pts {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn intersection(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.sup(&o.min),
            max: self.max.inf(&o.max),
        }
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min - Vec3::repeat(margin),
            max: self.max + Vec3::repeat(margin),
        }
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= o.min[i] && self.max[i] >= o.max[i])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn longest_axis(&self) -> usize {
        self.extent().imax()
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Slab test. Returns the entry parameter if the ray `o + t*d`, `t >= 0`,
    /// hits the box before `t_max`.
    pub fn ray_entry(&self, o: &Vec3, inv_d: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            let mut ta = (self.min[i] - o[i]) * inv_d[i];
            let mut tb = (self.max[i] - o[i]) * inv_d[i];
            if ta.is_nan() || tb.is_nan() {
                // Ray parallel to the slab and on its boundary plane.
                if o[i] < self.min[i] || o[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Two-sided Moller-Trumbore ray/triangle test. Returns `(t, u, v)` with the
/// hit at `o + t*d = (1-u-v) a + u b + v c`, `t > 0`.
#[inline]
pub fn ray_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some((t, u, v))
}

/// Closest point to `p` on triangle `abc` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
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
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Distance from `p` to the segment `a-b`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}
