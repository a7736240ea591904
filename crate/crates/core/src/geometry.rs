//! Small 3-D helpers shared by the structure, model and metric code.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

#[inline]
pub fn v3(p: [f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

#[inline]
pub fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

#[inline]
pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

pub fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Proper rigid motion `x -> R x + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn from_parts(r: &Matrix3<f64>, t: &Vec3) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = r[(i, j)];
            }
        }
        Self {
            rotation,
            translation: arr(t),
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    /// Uniformly random rotation with a Gaussian translation of scale `shift`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, shift: f64) -> Self {
        let axis: Vec3 = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let axis = Unit::new_normalize(if axis.norm() < 1e-9 { Vec3::x() } else { axis });
        let u: f64 = rng.random();
        let angle = sample_rotation_angle(u);
        let r = Rotation3::from_axis_angle(&axis, angle);
        let t = Vec3::new(
            shift * Distribution::<f64>::sample(&StandardNormal, rng),
            shift * Distribution::<f64>::sample(&StandardNormal, rng),
            shift * Distribution::<f64>::sample(&StandardNormal, rng),
        );
        Self::from_parts(r.matrix(), &t)
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        arr(&(self.matrix() * v3(p) + v3(self.translation)))
    }

    /// Rotation only, for displacements.
    pub fn rotate(&self, p: [f64; 3]) -> [f64; 3] {
        arr(&(self.matrix() * v3(p)))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.matrix().transpose();
        let t = -(rt * v3(self.translation));
        Self::from_parts(&rt, &t)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let r = self.matrix() * other.matrix();
        let t = self.matrix() * v3(other.translation) + v3(self.translation);
        Self::from_parts(&r, &t)
    }
}

/// Inverse-CDF sample of the rotation angle of a Haar-random rotation,
/// density (1 - cos θ)/π on [0, π], by bisection.
fn sample_rotation_angle(u: f64) -> f64 {
    let cdf = |t: f64| (t - t.sin()) / std::f64::consts::PI;
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Optimal rotation/translation superposing `mobile` onto `target` (Kabsch).
pub fn kabsch(mobile: &[[f64; 3]], target: &[[f64; 3]]) -> RigidTransform {
    assert_eq!(mobile.len(), target.len());
    let cm = v3(centroid(mobile));
    let ct = v3(centroid(target));
    let mut h = Matrix3::zeros();
    for (m, t) in mobile.iter().zip(target) {
        h += (v3(*m) - cm) * (v3(*t) - ct).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    let t = ct - r * cm;
    RigidTransform::from_parts(&r, &t)
}

pub fn rmsd(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let s: f64 = a.iter().zip(b).map(|(p, q)| dist(*p, *q).powi(2)).sum();
    (s / a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_transforms_are_proper_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = RigidTransform::random(&mut rng, 5.0);
            let r = t.matrix();
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            assert!((r * r.transpose() - Matrix3::identity()).norm() < 1e-12);
            let p = [1.0, -2.0, 0.5];
            let back = t.inverse().apply(t.apply(p));
            assert!(dist(p, back) < 1e-12);
        }
    }

    #[test]
    fn kabsch_recovers_a_known_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = RigidTransform::random(&mut rng, 3.0);
        let pts = [[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [0.0, 2.0, 0.3], [0.4, 0.1, 1.9]];
        let moved: Vec<_> = pts.iter().map(|p| t.apply(*p)).collect();
        let fit = kabsch(&pts, &moved);
        let refit: Vec<_> = pts.iter().map(|p| fit.apply(*p)).collect();
        assert!(rmsd(&refit, &moved) < 1e-10);
    }
}
