use std::f64::consts::TAU;

use crate::{Error, Result};

/// Row-major 2×2 matrix acting on `[row, col]` offsets.
pub type Mat2 = [[f64; 2]; 2];
pub type Mat3 = [[f64; 3]; 3];

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Circular distance between two angles, in `[0, π]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// `R_θ = [[cos θ, sin θ], [-sin θ, cos θ]]`.
pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    [[c, s], [-s, c]]
}

/// A similarity transform `T = A_s · Y_t · R_θ`, i.e. `T x = s (R_θ x + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim2Transform {
    s: f64,
    theta: f64,
    t: [f64; 2],
    matrix: Mat3,
    inverse: Mat3,
}

/// Builds a transform; `theta` is wrapped into `[0, 2π)`.
pub fn make_sim2(s: f64, theta: f64, t: [f64; 2]) -> Result<Sim2Transform> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {s}"
        )));
    }
    if !theta.is_finite() || !t[0].is_finite() || !t[1].is_finite() {
        return Err(Error::InvalidParameter(
            "non-finite transform parameter".into(),
        ));
    }
    let theta = normalize_angle(theta);
    let (sn, c) = theta.sin_cos();
    let matrix = [
        [s * c, s * sn, s * t[0]],
        [-s * sn, s * c, s * t[1]],
        [0.0, 0.0, 1.0],
    ];
    let inverse = [
        [c / s, -sn / s, -(c * t[0] - sn * t[1])],
        [sn / s, c / s, -(sn * t[0] + c * t[1])],
        [0.0, 0.0, 1.0],
    ];
    Ok(Sim2Transform {
        s,
        theta,
        t,
        matrix,
        inverse,
    })
}

pub(crate) fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

impl Sim2Transform {
    pub fn identity() -> Self {
        make_sim2(1.0, 0.0, [0.0, 0.0]).expect("identity is valid")
    }

    /// Rotation and scaling only.
    pub fn rotate_scale(s: f64, theta: f64) -> Result<Self> {
        make_sim2(s, theta, [0.0, 0.0])
    }

    /// The transform that first applies `s`/`theta` and then moves the
    /// result by `shift` pixels, i.e. `x ↦ s R_θ x + shift`.
    pub fn with_pixel_shift(s: f64, theta: f64, shift: [f64; 2]) -> Result<Self> {
        make_sim2(s, theta, [shift[0] / s, shift[1] / s])
    }

    pub fn scale(&self) -> f64 {
        self.s
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn translation(&self) -> [f64; 2] {
        self.t
    }

    /// Net displacement of the origin, `s t`.
    pub fn pixel_shift(&self) -> [f64; 2] {
        [self.matrix[0][2], self.matrix[1][2]]
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &Mat3 {
        &self.inverse
    }

    /// Linear part `s R_θ`.
    pub fn linear(&self) -> Mat2 {
        [
            [self.matrix[0][0], self.matrix[0][1]],
            [self.matrix[1][0], self.matrix[1][1]],
        ]
    }

    pub fn is_identity(&self) -> bool {
        self.s == 1.0 && self.theta == 0.0 && self.t == [0.0, 0.0]
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        apply3(&self.matrix, p)
    }

    #[inline]
    pub fn apply_inverse(&self, p: [f64; 2]) -> [f64; 2] {
        apply3(&self.inverse, p)
    }

    pub fn inverse(&self) -> Sim2Transform {
        let (sn, c) = self.theta.sin_cos();
        // T⁻¹ = A_{1/s} Y_{t'} R_{-θ} with t' = -s R_θᵀ t.
        let rt = [
            c * self.t[0] - sn * self.t[1],
            sn * self.t[0] + c * self.t[1],
        ];
        make_sim2(
            1.0 / self.s,
            -self.theta,
            [-self.s * rt[0], -self.s * rt[1]],
        )
        .expect("inverse of a valid transform is valid")
    }

    /// `compose(a, b)` has matrix `a · b` (apply `b` first).
    pub fn compose(&self, other: &Sim2Transform) -> Sim2Transform {
        compose(self, other)
    }
}

#[inline]
fn apply3(m: &Mat3, p: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
    ]
}

/// Product of two transforms, re-expressed in `(s, θ, t)` form.
pub fn compose(a: &Sim2Transform, b: &Sim2Transform) -> Sim2Transform {
    let m = mat3_mul(&a.matrix, &b.matrix);
    let s = m[0][0].hypot(m[0][1]);
    let theta = m[0][1].atan2(m[0][0]);
    make_sim2(s, theta, [m[0][2] / s, m[1][2] / s]).expect("Sim(2) is closed under products")
}
