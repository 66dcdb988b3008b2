//! Closed-form kernels for 2×2 symmetric matrices.
//!
//! Every covariance in this crate is a symmetric 2×2 matrix, so the general
//! machinery (LU, SVD, iterative square roots) collapses to a handful of
//! scalar formulas. They are collected here so the metric and loss code can
//! read like the math it implements.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A 2-vector. Used for points, means and offsets.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    /// Rotate counter-clockwise by `theta` radians.
    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Outer product `v vᵀ`.
    pub fn outer(self) -> Sym2 {
        Sym2::new(self.x * self.x, self.x * self.y, self.y * self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        self.scale(rhs)
    }
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// Eigendecomposition of a [`Sym2`], eigenvalues sorted `major ≥ minor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub major: f64,
    pub minor: f64,
    /// Angle of the major eigenvector, in `(-π/2, π/2]`.
    pub angle: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn diag(xx: f64, yy: f64) -> Self {
        Self { xx, xy: 0.0, yy }
    }

    /// `R(θ) · diag(major, minor) · R(θ)ᵀ`.
    pub fn from_eigen(major: f64, minor: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Sym2::new(
            major * c * c + minor * s * s,
            (major - minor) * c * s,
            major * s * s + minor * c * c,
        )
    }

    pub fn trace(self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn scale(self, s: f64) -> Sym2 {
        Sym2::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn add_diag(self, eps: f64) -> Sym2 {
        Sym2::new(self.xx + eps, self.xy, self.yy + eps)
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    /// `vᵀ M v`.
    pub fn quad_form(self, v: Vec2) -> f64 {
        v.dot(self.mul_vec(v))
    }

    /// `Tr(A·B)` for symmetric `A`, `B`; equals the Frobenius inner product.
    pub fn trace_product(self, other: Sym2) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    /// `A·B·A`, symmetric whenever both inputs are.
    pub fn sandwich(self, inner: Sym2) -> Sym2 {
        let (a, b, c) = (self.xx, self.xy, self.yy);
        // A·inner
        let m00 = a * inner.xx + b * inner.xy;
        let m01 = a * inner.xy + b * inner.yy;
        let m10 = b * inner.xx + c * inner.xy;
        let m11 = b * inner.xy + c * inner.yy;
        Sym2::new(m00 * a + m01 * b, m00 * b + m01 * c, m10 * b + m11 * c)
    }

    /// Inverse via the adjugate. Caller guarantees `det > 0`.
    pub fn inverse(self) -> Sym2 {
        let d = self.det();
        Sym2::new(self.yy / d, -self.xy / d, self.xx / d)
    }

    /// Closed-form eigendecomposition using the half-angle of
    /// `(xx - yy, 2·xy)`. Exact for diagonal input.
    pub fn eigen(self) -> Eigen2 {
        let half_diff = 0.5 * (self.xx - self.yy);
        let radius = half_diff.hypot(self.xy);
        let mean = 0.5 * self.trace();
        let major = mean + radius;
        // det / major avoids cancellation when the eigenvalues are far apart.
        let minor = if major > 0.0 {
            self.det() / major
        } else {
            mean - radius
        };
        let angle = 0.5 * (2.0 * self.xy).atan2(self.xx - self.yy);
        Eigen2 {
            major,
            minor,
            angle,
        }
    }

    pub fn min_eigenvalue(self) -> f64 {
        self.eigen().minor
    }

    pub fn is_finite(self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    pub fn is_positive_definite(self) -> bool {
        self.is_finite() && self.xx > 0.0 && self.det() > 0.0
    }

    /// Rotate the frame: `R(θ) · M · R(θ)ᵀ`.
    pub fn rotate(self, theta: f64) -> Sym2 {
        let (s, c) = theta.sin_cos();
        let r = [[c, -s], [s, c]];
        let m = [[self.xx, self.xy], [self.xy, self.yy]];
        let mut rm = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                rm[i][j] = r[i][0] * m[0][j] + r[i][1] * m[1][j];
            }
        }
        let entry = |i: usize, j: usize| rm[i][0] * r[j][0] + rm[i][1] * r[j][1];
        Sym2::new(entry(0, 0), entry(0, 1), entry(1, 1))
    }

    pub fn to_rows(self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    pub fn max_abs_diff(self, other: Sym2) -> f64 {
        (self.xx - other.xx)
            .abs()
            .max((self.xy - other.xy).abs())
            .max((self.yy - other.yy).abs())
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, rhs: Sym2) -> Sym2 {
        Sym2::new(self.xx + rhs.xx, self.xy + rhs.xy, self.yy + rhs.yy)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, rhs: Sym2) -> Sym2 {
        Sym2::new(self.xx - rhs.xx, self.xy - rhs.xy, self.yy - rhs.yy)
    }
}
