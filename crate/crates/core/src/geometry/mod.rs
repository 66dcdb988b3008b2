//! Oriented-object representations and the conversions between them.
//!
//! Every representation (oriented box, quadrilateral, point set) maps onto a
//! [`Gaussian2`]. Boxes use the exact matrix transform; point sets and
//! quadrilaterals use the maximum-likelihood fit. For a rectangle's four
//! corners the two routes agree exactly, which is what makes the Gaussian a
//! single unified target regardless of how a prediction was parameterized.

mod iou;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Sym2, Vec2};

pub use iou::{mc_iou, polygon_area, rotated_iou};

/// Relative threshold on `λmin` below which a fitted covariance is regularized.
pub const COVARIANCE_REGULARIZATION: f64 = 1e-7;

/// `λmax/λmin` below `1 + SQUARE_TOLERANCE` decodes as a square with `θ = 0`.
pub const SQUARE_TOLERANCE: f64 = 1e-9;

/// Default number of points in a [`PointSet`].
pub const DEFAULT_POINT_COUNT: usize = 9;

/// Oriented box `(cx, cy, w, h, θ)`, angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl Obb {
    /// Builds a box, rejecting non-finite fields and non-positive sides.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        let b = Self {
            cx,
            cy,
            w,
            h,
            theta,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cx", self.cx),
            ("cy", self.cy),
            ("w", self.w),
            ("h", self.h),
            ("theta", self.theta),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("obb field `{name}` is not finite")));
            }
        }
        if self.w <= 0.0 {
            return Err(Error::invalid(format!("obb field `w` must be > 0, got {}", self.w)));
        }
        if self.h <= 0.0 {
            return Err(Error::invalid(format!("obb field `h` must be > 0, got {}", self.h)));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Long side over short side.
    pub fn aspect_ratio(&self) -> f64 {
        self.w.max(self.h) / self.w.min(self.h)
    }

    pub fn is_canonical(&self) -> bool {
        self.w >= self.h && (-FRAC_PI_2..FRAC_PI_2).contains(&self.theta)
    }
}

/// Four-corner quadrilateral. Corner order carries no meaning downstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Qbb {
    pub corners: [Vec2; 4],
}

impl Qbb {
    pub fn new(corners: [Vec2; 4]) -> Self {
        Self { corners }
    }

    pub fn to_point_set(&self) -> PointSet {
        PointSet {
            points: self.corners.to_vec(),
        }
    }
}

/// `K ≥ 3` points describing one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PointSetRepr")]
pub struct PointSet {
    points: Vec<Vec2>,
}

#[derive(Deserialize)]
struct PointSetRepr {
    points: Vec<Vec2>,
}

impl TryFrom<PointSetRepr> for PointSet {
    type Error = Error;
    fn try_from(r: PointSetRepr) -> Result<Self> {
        PointSet::new(r.points)
    }
}

impl PointSet {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::invalid(format!(
                "a point set needs at least 3 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Vec2> {
        self.points
    }

    pub fn centroid(&self) -> Vec2 {
        mean(&self.points)
    }
}

impl From<Qbb> for PointSet {
    fn from(q: Qbb) -> Self {
        q.to_point_set()
    }
}

/// 2-D Gaussian `N(μ, Σ)` with a symmetric positive-definite covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct Gaussian2 {
    mu: Vec2,
    sigma: Sym2,
}

/// Wire form `{"mu":[x,y],"sigma":[[a,b],[b,c]]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRepr {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

impl TryFrom<GaussianRepr> for Gaussian2 {
    type Error = Error;
    fn try_from(r: GaussianRepr) -> Result<Self> {
        Gaussian2::from_rows(Vec2::from(r.mu), r.sigma)
    }
}

impl From<Gaussian2> for GaussianRepr {
    fn from(g: Gaussian2) -> Self {
        GaussianRepr {
            mu: g.mu.into(),
            sigma: g.sigma.to_rows(),
        }
    }
}

impl Gaussian2 {
    pub fn new(mu: Vec2, sigma: Sym2) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::invalid("gaussian field `mu` is not finite"));
        }
        if !sigma.is_finite() {
            return Err(Error::invalid("gaussian field `sigma` is not finite"));
        }
        if !sigma.is_positive_definite() || sigma.min_eigenvalue() <= 0.0 {
            return Err(Error::degenerate(format!(
                "sigma [[{}, {}], [{}, {}]] is not positive definite",
                sigma.xx, sigma.xy, sigma.xy, sigma.yy
            )));
        }
        Ok(Self { mu, sigma })
    }

    /// Builds from a full 2×2 matrix, checking symmetry.
    pub fn from_rows(mu: Vec2, rows: [[f64; 2]; 2]) -> Result<Self> {
        let (upper, lower) = (rows[0][1], rows[1][0]);
        if (upper - lower).abs() > 1e-12 * (1.0 + upper.abs()) {
            return Err(Error::invalid(format!(
                "gaussian field `sigma` is not symmetric ({upper} vs {lower})"
            )));
        }
        Self::new(mu, Sym2::new(rows[0][0], upper, rows[1][1]))
    }

    pub fn isotropic(mu: Vec2, variance: f64) -> Result<Self> {
        Self::new(mu, Sym2::diag(variance, variance))
    }

    pub fn mu(&self) -> Vec2 {
        self.mu
    }

    pub fn sigma(&self) -> Sym2 {
        self.sigma
    }

    pub fn translate(&self, d: Vec2) -> Gaussian2 {
        Gaussian2 {
            mu: self.mu + d,
            sigma: self.sigma,
        }
    }

    /// Rotation about the origin: `μ → Rμ`, `Σ → RΣRᵀ`.
    pub fn rotate(&self, theta: f64) -> Gaussian2 {
        Gaussian2 {
            mu: self.mu.rotate(theta),
            sigma: self.sigma.rotate(theta),
        }
    }

    /// Scaling about the origin: `μ → sμ`, `Σ → s²Σ`.
    pub fn scale(&self, s: f64) -> Result<Gaussian2> {
        Gaussian2::new(self.mu.scale(s), self.sigma.scale(s * s))
    }

    pub fn max_abs_diff(&self, other: &Gaussian2) -> f64 {
        (self.mu.x - other.mu.x)
            .abs()
            .max((self.mu.y - other.mu.y).abs())
            .max(self.sigma.max_abs_diff(other.sigma))
    }
}

/// Maps a box to `N((cx, cy), R(θ)·diag(w²/4, h²/4)·R(θ)ᵀ)`.
pub fn obb_to_gaussian(b: &Obb) -> Result<Gaussian2> {
    b.validate()?;
    let sigma = Sym2::from_eigen(b.w * b.w / 4.0, b.h * b.h / 4.0, b.theta);
    Gaussian2::new(b.center(), sigma)
}

/// Decodes a Gaussian into its canonical box.
///
/// The major eigenvector gives the direction of `w`. Near-isotropic
/// covariances carry no orientation, so they decode with `θ = 0`.
pub fn gaussian_to_obb(g: &Gaussian2) -> Obb {
    let e = g.sigma.eigen();
    let theta = if e.major / e.minor < 1.0 + SQUARE_TOLERANCE {
        0.0
    } else {
        fold_angle(e.angle)
    };
    Obb {
        cx: g.mu.x,
        cy: g.mu.y,
        w: 2.0 * e.major.sqrt(),
        h: 2.0 * e.minor.sqrt(),
        theta,
    }
}

/// Folds an angle into `[-π/2, π/2)`.
pub fn fold_angle(theta: f64) -> f64 {
    let mut t = theta - PI * ((theta + FRAC_PI_2) / PI).floor();
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    if t < -FRAC_PI_2 {
        t += PI;
    }
    t
}

/// Long-side form: `w ≥ h`, `θ ∈ [-π/2, π/2)`.
pub fn canonicalize_obb(b: &Obb) -> Obb {
    let (w, h, theta) = if b.w < b.h {
        (b.h, b.w, b.theta + FRAC_PI_2)
    } else {
        (b.w, b.h, b.theta)
    };
    Obb {
        cx: b.cx,
        cy: b.cy,
        w,
        h,
        theta: fold_angle(theta),
    }
}

/// Corners counter-clockwise, starting from the one rotated from `(+w/2, +h/2)`.
pub fn obb_to_qbb(b: &Obb) -> Qbb {
    let (hw, hh) = (b.w / 2.0, b.h / 2.0);
    let c = b.center();
    let local = [
        Vec2::new(hw, hh),
        Vec2::new(-hw, hh),
        Vec2::new(-hw, -hh),
        Vec2::new(hw, -hh),
    ];
    Qbb::new(local.map(|p| c + p.rotate(b.theta)))
}

/// Result of a maximum-likelihood fit, with the regularization that was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleFit {
    pub gaussian: Gaussian2,
    /// Population covariance before regularization.
    pub raw_sigma: Sym2,
    /// Amount added to the diagonal; zero when the fit was well conditioned.
    pub ridge: f64,
}

fn mean(points: &[Vec2]) -> Vec2 {
    let n = points.len() as f64;
    let s = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
    s.scale(1.0 / n)
}

/// Sample mean and population covariance (divisor `N`), ridge-regularized
/// when the smallest eigenvalue falls below `1e-7 · max(trace, 1)`.
pub fn fit_gaussian_mle_detailed(points: &[Vec2]) -> Result<MleFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "MLE fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("point {i} is not finite")));
    }
    if points.iter().all(|&p| p == points[0]) {
        return Err(Error::degenerate("all points are identical"));
    }
    // Summing in a canonical order makes the fit exactly permutation invariant.
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mu = mean(&sorted);
    let n = points.len() as f64;
    let raw = sorted
        .iter()
        .fold(Sym2::default(), |acc, &p| acc + (p - mu).outer())
        .scale(1.0 / n);
    let threshold = COVARIANCE_REGULARIZATION * raw.trace().max(1.0);
    let ridge = if raw.min_eigenvalue() < threshold {
        threshold
    } else {
        0.0
    };
    let gaussian = Gaussian2::new(mu, raw.add_diag(ridge))?;
    Ok(MleFit {
        gaussian,
        raw_sigma: raw,
        ridge,
    })
}

pub fn fit_gaussian_mle(points: &[Vec2]) -> Result<Gaussian2> {
    fit_gaussian_mle_detailed(points).map(|f| f.gaussian)
}

/// Pointwise `pts + offsets`.
pub fn apply_offsets(pts: &PointSet, offsets: &[Vec2]) -> Result<PointSet> {
    if offsets.len() != pts.len() {
        return Err(Error::invalid(format!(
            "expected {} offsets, got {}",
            pts.len(),
            offsets.len()
        )));
    }
    PointSet::new(
        pts.points
            .iter()
            .zip(offsets)
            .map(|(&p, &d)| p + d)
            .collect(),
    )
}

/// `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ)) / (2π √det Σ)`.
pub fn gaussian_density(g: &Gaussian2, x: Vec2) -> f64 {
    let d = x - g.mu;
    let m = g.sigma.inverse().quad_form(d);
    (-0.5 * m).exp() / (2.0 * PI * g.sigma.det().sqrt())
}
