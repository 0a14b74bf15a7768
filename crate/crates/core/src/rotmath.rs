//! Rotation representations and conversions: quaternions, 3x3 matrices,
//! and the 6D (first-two-columns) encoding used by the pose estimator.
//!
//! All storage is double precision. Conversions round-trip within 1e-9 and
//! `acos` arguments are clamped so angles are well-defined at 0 and pi.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

pub fn v_add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn v_sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn v_scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn v_dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn v_cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn v_norm(a: Vec3) -> f64 {
    v_dot(a, a).sqrt()
}

/// Unit quaternion, scalar part first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Construct and normalize to unit length.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Quat {
        Quat { w, x, y, z }.normalized()
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let n = v_norm(axis);
        if n == 0.0 {
            return Quat::IDENTITY;
        }
        let half = angle / 2.0;
        let s = half.sin() / n;
        Quat::new(half.cos(), axis[0] * s, axis[1] * s, axis[2] * s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Quat {
        let n = self.norm();
        Quat {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> f64 {
        2.0 * self.w.abs().clamp(0.0, 1.0).acos()
    }
}

/// Row-major orthonormal 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotMat(pub [[f64; 3]; 3]);

impl RotMat {
    pub const IDENTITY: RotMat = RotMat([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> RotMat {
        RotMat([r0, r1, r2])
    }

    pub fn col(&self, j: usize) -> Vec3 {
        [self.0[0][j], self.0[1][j], self.0[2][j]]
    }

    pub fn row(&self, i: usize) -> Vec3 {
        self.0[i]
    }

    pub fn transpose(&self) -> RotMat {
        let m = &self.0;
        RotMat([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul(&self, other: &RotMat) -> RotMat {
        let a = &self.0;
        let b = &other.0;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        RotMat(out)
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        [
            v_dot(self.0[0], v),
            v_dot(self.0[1], v),
            v_dot(self.0[2], v),
        ]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn frobenius_dist(&self, other: &RotMat) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = self.0[i][j] - other.0[i][j];
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// Max deviation from orthonormality and unit determinant.
    pub fn orthonormality_error(&self) -> f64 {
        let t = self.mul(&self.transpose());
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((t.0[i][j] - target).abs());
            }
        }
        err.max((self.det() - 1.0).abs())
    }

    pub fn as_flat(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn from_flat(f: &[f64]) -> RotMat {
        RotMat([[f[0], f[1], f[2]], [f[3], f[4], f[5]], [f[6], f[7], f[8]]])
    }
}

/// First two columns of a rotation matrix, flattened as
/// `[c0x, c0y, c0z, c1x, c1y, c1z]`. Any 6-vector with non-degenerate
/// columns maps to a valid rotation through [`rot6d_to_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub const IDENTITY: Rot6D = Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn col0(&self) -> Vec3 {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn col1(&self) -> Vec3 {
        [self.0[3], self.0[4], self.0[5]]
    }
}

/// Ratio of the second column's rejection norm to its norm below which the
/// two columns are treated as parallel (angle <= 1e-7 rad).
const PARALLEL_TOL: f64 = 1e-7;

/// Gram-Schmidt map from the 6D encoding to a rotation matrix.
///
/// Column 0 is normalized first, column 1 is orthogonalized against it, and
/// column 2 is their cross product. Invariant to positive scaling of either
/// input column.
pub fn rot6d_to_matrix(r: &Rot6D) -> Result<RotMat> {
    let a = r.col0();
    let b = r.col1();
    let na = v_norm(a);
    let nb = v_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput(
            "6D rotation column is zero".to_string(),
        ));
    }
    let c0 = v_scale(a, 1.0 / na);
    let rej = v_sub(b, v_scale(c0, v_dot(c0, b)));
    let nrej = v_norm(rej);
    if nrej / nb <= PARALLEL_TOL {
        return Err(Error::DegenerateInput(
            "6D rotation columns are parallel".to_string(),
        ));
    }
    let c1 = v_scale(rej, 1.0 / nrej);
    let c2 = v_cross(c0, c1);
    Ok(RotMat([
        [c0[0], c1[0], c2[0]],
        [c0[1], c1[1], c2[1]],
        [c0[2], c1[2], c2[2]],
    ]))
}

/// Inverse embedding: drop the third column.
pub fn matrix_to_rot6d(m: &RotMat) -> Rot6D {
    let c0 = m.col(0);
    let c1 = m.col(1);
    Rot6D([c0[0], c0[1], c0[2], c1[0], c1[1], c1[2]])
}

/// Geodesic angle between two rotations, in radians, in [0, pi].
pub fn geodesic_angle(a: &RotMat, b: &RotMat) -> f64 {
    let rel = a.transpose().mul(b);
    let trace = rel.0[0][0] + rel.0[1][1] + rel.0[2][2];
    ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

pub fn quat_compose(a: &Quat, b: &Quat) -> Quat {
    Quat::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )
}

pub fn quat_inverse(q: &Quat) -> Quat {
    Quat {
        w: q.w,
        x: -q.x,
        y: -q.y,
        z: -q.z,
    }
}

pub fn quat_to_matrix(q: &Quat) -> RotMat {
    let Quat { w, x, y, z } = *q;
    RotMat([
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ])
}

/// Shepperd's method: pick the largest diagonal combination for stability.
pub fn matrix_to_quat(m: &RotMat) -> Quat {
    let r = &m.0;
    let trace = r[0][0] + r[1][1] + r[2][2];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        Quat {
            w: 0.25 * s,
            x: (r[2][1] - r[1][2]) / s,
            y: (r[0][2] - r[2][0]) / s,
            z: (r[1][0] - r[0][1]) / s,
        }
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
        Quat {
            w: (r[2][1] - r[1][2]) / s,
            x: 0.25 * s,
            y: (r[0][1] + r[1][0]) / s,
            z: (r[0][2] + r[2][0]) / s,
        }
    } else if r[1][1] > r[2][2] {
        let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
        Quat {
            w: (r[0][2] - r[2][0]) / s,
            x: (r[0][1] + r[1][0]) / s,
            y: 0.25 * s,
            z: (r[1][2] + r[2][1]) / s,
        }
    } else {
        let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
        Quat {
            w: (r[1][0] - r[0][1]) / s,
            x: (r[0][2] + r[2][0]) / s,
            y: (r[1][2] + r[2][1]) / s,
            z: 0.25 * s,
        }
    };
    q.normalized()
}

/// Uniform random rotation from a seeded generator (4-normal quaternion).
pub fn random_rotation(seed: u64) -> RotMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_rotation_with(&mut rng)
}

pub fn random_rotation_with<R: Rng>(rng: &mut R) -> RotMat {
    let w: f64 = rng.sample(StandardNormal);
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    quat_to_matrix(&Quat::new(w, x, y, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rot_z(angle: f64) -> RotMat {
        quat_to_matrix(&Quat::from_axis_angle([0.0, 0.0, 1.0], angle))
    }

    #[test]
    fn rot6d_identity() {
        let m = rot6d_to_matrix(&Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        assert!(m.frobenius_dist(&RotMat::IDENTITY) < 1e-15);
    }

    #[test]
    fn rot6d_scale_invariance() {
        let m = rot6d_to_matrix(&Rot6D([2.0, 0.0, 0.0, 0.0, 3.0, 0.0])).unwrap();
        assert!(m.frobenius_dist(&RotMat::IDENTITY) < 1e-15);
    }

    #[test]
    fn rot6d_from_z_rotation_roundtrip() {
        // Oracle matrix built from a quaternion, independent of the 6D path.
        let oracle = quat_to_matrix(&Quat::from_axis_angle(
            [0.0, 0.0, 1.0],
            std::f64::consts::FRAC_PI_2,
        ));
        let six = matrix_to_rot6d(&oracle);
        let back = rot6d_to_matrix(&six).unwrap();
        assert!(back.frobenius_dist(&oracle) < 1e-12);
    }

    #[test]
    fn rot6d_degenerate_inputs() {
        assert!(matches!(
            rot6d_to_matrix(&Rot6D([0.0; 6])),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            rot6d_to_matrix(&Rot6D([1.0, 0.0, 0.0, 2.0, 0.0, 0.0])),
            Err(Error::DegenerateInput(_))
        ));
        // Anti-parallel columns are degenerate too.
        assert!(matches!(
            rot6d_to_matrix(&Rot6D([1.0, 0.0, 0.0, -1.0, 0.0, 0.0])),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn matrix_to_rot6d_known_cases() {
        assert_eq!(
            matrix_to_rot6d(&RotMat::IDENTITY).0,
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
        // 180 degrees about x flips the sign of the second column.
        let r = quat_to_matrix(&Quat::from_axis_angle([1.0, 0.0, 0.0], std::f64::consts::PI));
        let six = matrix_to_rot6d(&r);
        for (got, want) in six.0.iter().zip([1.0, 0.0, 0.0, 0.0, -1.0, 0.0]) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn roundtrip_1000_random_rotations() {
        for seed in 0..1000u64 {
            let m = random_rotation(seed);
            assert!(m.orthonormality_error() < 1e-9);
            let back = rot6d_to_matrix(&matrix_to_rot6d(&m)).unwrap();
            assert!(back.frobenius_dist(&m) < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn geodesic_known_angles() {
        let r = rot_z(1.0);
        assert_eq!(geodesic_angle(&r, &r), 0.0);
        let quarter = rot_z(std::f64::consts::FRAC_PI_2);
        assert!(
            (geodesic_angle(&RotMat::IDENTITY, &quarter) - std::f64::consts::FRAC_PI_2).abs()
                < 1e-12
        );
    }

    #[test]
    fn geodesic_matches_quaternion_half_angle() {
        // identity vs composition of two random rotations == composed quat angle
        for seed in 0..50u64 {
            let a = random_rotation(seed * 2 + 1);
            let b = random_rotation(seed * 2 + 2);
            let composed = a.mul(&b);
            let q = quat_compose(&matrix_to_quat(&a), &matrix_to_quat(&b));
            let got = geodesic_angle(&RotMat::IDENTITY, &composed);
            assert!((got - q.angle()).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn quat_ops_roundtrip() {
        for seed in 0..100u64 {
            let m = random_rotation(seed);
            let q = matrix_to_quat(&m);
            assert!(quat_to_matrix(&q).frobenius_dist(&m) < 1e-9);
            let qi = quat_inverse(&q);
            let ident = quat_to_matrix(&quat_compose(&q, &qi));
            assert!(ident.frobenius_dist(&RotMat::IDENTITY) < 1e-9);
        }
    }

    #[test]
    fn random_rotation_deterministic() {
        assert_eq!(random_rotation(7).0, random_rotation(7).0);
    }

    proptest! {
        #[test]
        fn prop_rot6d_roundtrip(seed in 0u64..10_000) {
            let m = random_rotation(seed);
            let six = matrix_to_rot6d(&m);
            let back = rot6d_to_matrix(&six).unwrap();
            prop_assert!(back.frobenius_dist(&m) < 1e-9);
        }

        #[test]
        fn prop_geodesic_symmetry_and_triangle(seed in 0u64..10_000) {
            let a = random_rotation(seed.wrapping_mul(3).wrapping_add(11));
            let b = random_rotation(seed.wrapping_mul(3).wrapping_add(12));
            let c = random_rotation(seed.wrapping_mul(3).wrapping_add(13));
            let ab = geodesic_angle(&a, &b);
            let ba = geodesic_angle(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-9);
            let ac = geodesic_angle(&a, &c);
            let cb = geodesic_angle(&c, &b);
            prop_assert!(ab <= ac + cb + 1e-9);
        }

        #[test]
        fn prop_rot6d_positive_scaling(seed in 0u64..5_000, s0 in 0.1f64..10.0, s1 in 0.1f64..10.0) {
            let m = random_rotation(seed);
            let six = matrix_to_rot6d(&m);
            let scaled = Rot6D([
                six.0[0] * s0, six.0[1] * s0, six.0[2] * s0,
                six.0[3] * s1, six.0[4] * s1, six.0[5] * s1,
            ]);
            let a = rot6d_to_matrix(&six).unwrap();
            let b = rot6d_to_matrix(&scaled).unwrap();
            prop_assert!(a.frobenius_dist(&b) < 1e-12);
        }
    }
}
