//! Normalized regression losses over Gaussian distances and their gradients
//! with respect to raw point coordinates.
//!
//! The gradient runs the chain rule through three layers: the normalization
//! `L(D)`, the distance `D(μp, Σp)` against a fixed ground truth, and the
//! maximum-likelihood fit `(μp, Σp)(x₁..x_K)`. With `G = ∂D/∂Σp` (symmetric)
//! and `g = ∂D/∂μp`, each point receives
//!
//! ```text
//! ∂D/∂xᵢ = g/K + (2/K)·G·(xᵢ − μp)
//! ```
//!
//! since `Σᵢ(xᵢ − μp) = 0` kills the mean's contribution to `Σp`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    fit_gaussian_mle, fit_gaussian_mle_detailed, obb_to_gaussian, Gaussian2, Obb, PointSet,
    COVARIANCE_REGULARIZATION,
};
use crate::linalg::{Sym2, Vec2};
use crate::metrics::{self, MetricKind};

/// KLD values at or below this are treated as the apex of the `√D` cone,
/// where the loss has a zero subgradient.
pub const KLD_APEX: f64 = 1e-14;

/// Relative finite-difference step.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Lkld,
    Lbd,
    Lwd,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Lkld, LossKind::Lbd, LossKind::Lwd];

    pub fn metric(self) -> MetricKind {
        match self {
            LossKind::Lkld => MetricKind::Kld,
            LossKind::Lbd => MetricKind::Bd,
            LossKind::Lwd => MetricKind::Wd,
        }
    }

    pub fn for_metric(metric: MetricKind) -> LossKind {
        match metric {
            MetricKind::Kld => LossKind::Lkld,
            MetricKind::Bd => LossKind::Lbd,
            MetricKind::Wd => LossKind::Lwd,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Lkld => "lkld",
            LossKind::Lbd => "lbd",
            LossKind::Lwd => "lwd",
        }
    }

    /// Maps a raw distance to the loss value.
    pub fn normalize(self, distance: f64) -> f64 {
        match self {
            LossKind::Lkld => kld_loss(distance),
            LossKind::Lbd => bd_loss(distance),
            LossKind::Lwd => wd_loss(distance),
        }
    }

    /// `dL/dD`. For KLD this is `dL/d√D · 1/(2√D)` and is zero at the apex.
    fn slope(self, distance: f64) -> f64 {
        match self {
            LossKind::Lkld => {
                if distance <= KLD_APEX {
                    0.0
                } else {
                    let r = distance.sqrt();
                    let dl_dr = 1.0 / ((2.0 + r) * (2.0 + r));
                    dl_dr / (2.0 * r)
                }
            }
            LossKind::Lbd => 1.0 / ((1.0 + distance) * (1.0 + distance)),
            LossKind::Lwd => {
                let l = 1.0 + distance.ln_1p();
                1.0 / (l * l * (1.0 + distance))
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lkld" | "l_kld" => Ok(LossKind::Lkld),
            "lbd" | "l_bd" => Ok(LossKind::Lbd),
            "lwd" | "l_wd" => Ok(LossKind::Lwd),
            other => Err(Error::invalid(format!(
                "unknown loss `{other}` (expected lkld, lbd or lwd)"
            ))),
        }
    }
}

/// `1 − 1/(2 + √D)`; floors at 0.5.
pub fn kld_loss(d: f64) -> f64 {
    1.0 - 1.0 / (2.0 + d.sqrt())
}

/// `1 − 1/(1 + D)`.
pub fn bd_loss(d: f64) -> f64 {
    1.0 - 1.0 / (1.0 + d)
}

/// `1 − 1/(1 + ln(1 + D))`.
pub fn wd_loss(d: f64) -> f64 {
    1.0 - 1.0 / (1.0 + d.ln_1p())
}

/// Loss between ground truth and prediction, distance taken in `(gt, pred)` order.
pub fn loss(kind: LossKind, gt: &Gaussian2, pred: &Gaussian2) -> f64 {
    kind.normalize(kind.metric().distance(gt, pred))
}

/// Loss value plus gradient with respect to each point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossGradient {
    pub value: f64,
    /// Raw distance the loss was computed from.
    pub distance: f64,
    pub d_points: Vec<Vec2>,
}

impl LossGradient {
    pub fn norm(&self) -> f64 {
        self.d_points.iter().map(|v| v.norm_sq()).sum::<f64>().sqrt()
    }

    /// `‖self − reference‖ / (‖reference‖ + 1e-12)`.
    pub fn relative_error(&self, reference: &LossGradient) -> f64 {
        let diff: f64 = self
            .d_points
            .iter()
            .zip(&reference.d_points)
            .map(|(a, b)| (*a - *b).norm_sq())
            .sum::<f64>()
            .sqrt();
        diff / (reference.norm() + 1e-12)
    }
}

/// Partial derivatives of a distance with respect to the prediction's parameters.
struct PredictionPartials {
    d_mu: Vec2,
    /// Symmetric `G` with `dD = tr(G·dΣp)`.
    d_sigma: Sym2,
}

fn distance_partials(metric: MetricKind, gt: &Gaussian2, pred: &Gaussian2) -> PredictionPartials {
    let (sg, sp) = (gt.sigma(), pred.sigma());
    let d = pred.mu() - gt.mu();
    match metric {
        MetricKind::Kld => {
            // ½(P⁻¹ − P⁻¹(Σg + ddᵀ)P⁻¹)
            let p_inv = sp.inverse();
            PredictionPartials {
                d_mu: p_inv.mul_vec(d),
                d_sigma: (p_inv - p_inv.sandwich(sg + d.outer())).scale(0.5),
            }
        }
        MetricKind::Bd => {
            let m_inv = (sg + sp).scale(0.5).inverse();
            let quad = m_inv.sandwich(d.outer()).scale(-1.0 / 8.0);
            PredictionPartials {
                d_mu: m_inv.mul_vec(d).scale(0.25),
                d_sigma: (quad + m_inv.scale(0.5)).scale(0.5) - sp.inverse().scale(0.25),
            }
        }
        MetricKind::Wd => {
            // I − (Σg + √(|Σp||Σg|)·Σp⁻¹) / Tr((Σp^½ Σg Σp^½)^½)
            let root_det = (sp.det() * sg.det()).sqrt();
            let coupling = metrics::trace_sqrt_product_unchecked(sp, sg);
            let inner = sg + sp.inverse().scale(root_det);
            PredictionPartials {
                d_mu: d.scale(2.0),
                d_sigma: Sym2::IDENTITY - inner.scale(1.0 / coupling),
            }
        }
    }
}

/// Analytic gradient of `loss(kind, gt, fit(pts))` with respect to every point.
pub fn loss_grad_points(kind: LossKind, gt: &Gaussian2, pts: &PointSet) -> Result<LossGradient> {
    let fit = fit_gaussian_mle_detailed(pts.points())?;
    let pred = fit.gaussian;
    let distance = kind.metric().distance(gt, &pred);
    let value = kind.normalize(distance);
    let slope = kind.slope(distance);
    let partials = distance_partials(kind.metric(), gt, &pred);

    let mut g_sigma = partials.d_sigma;
    if fit.ridge > 0.0 && fit.raw_sigma.trace() > 1.0 {
        // ridge = c·tr(Σ) contributes c·tr(G)·I.
        g_sigma = g_sigma.add_diag(COVARIANCE_REGULARIZATION * g_sigma.trace());
    }

    let n = pts.len() as f64;
    let mu = pred.mu();
    let d_points = pts
        .points()
        .iter()
        .map(|&x| {
            let from_mu = partials.d_mu.scale(1.0 / n);
            let from_sigma = g_sigma.mul_vec(x - mu).scale(2.0 / n);
            (from_mu + from_sigma).scale(slope)
        })
        .collect();
    Ok(LossGradient {
        value,
        distance,
        d_points,
    })
}

/// `1e-5 · max(1, max |coordinate|)`.
pub fn default_fd_step(pts: &PointSet) -> f64 {
    let scale = pts
        .points()
        .iter()
        .fold(1.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs()));
    FD_RELATIVE_STEP * scale
}

/// Central differences of an arbitrary scalar function of the points.
pub fn central_differences<F>(f: F, pts: &[Vec2], step: f64) -> Result<Vec<Vec2>>
where
    F: Fn(&[Vec2]) -> Result<f64>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut work = pts.to_vec();
    let mut grad = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        let mut partial = [0.0; 2];
        for (axis, slot) in partial.iter_mut().enumerate() {
            let orig = work[i];
            let bump = |p: Vec2, h: f64| {
                if axis == 0 {
                    Vec2::new(p.x + h, p.y)
                } else {
                    Vec2::new(p.x, p.y + h)
                }
            };
            work[i] = bump(orig, step);
            let plus = f(&work)?;
            work[i] = bump(orig, -step);
            let minus = f(&work)?;
            work[i] = orig;
            *slot = (plus - minus) / (2.0 * step);
        }
        grad.push(Vec2::from(partial));
    }
    Ok(grad)
}

/// Finite-difference counterpart of [`loss_grad_points`].
pub fn fd_gradient(
    kind: LossKind,
    gt: &Gaussian2,
    pts: &PointSet,
    step: f64,
) -> Result<LossGradient> {
    let eval = |p: &[Vec2]| -> Result<f64> {
        let pred = fit_gaussian_mle(p)?;
        Ok(loss(kind, gt, &pred))
    };
    let d_points = central_differences(eval, pts.points(), step)?;
    let pred = fit_gaussian_mle(pts.points())?;
    let distance = kind.metric().distance(gt, &pred);
    Ok(LossGradient {
        value: kind.normalize(distance),
        distance,
        d_points,
    })
}

/// One row of the normalization design table: a similarity function for
/// label assignment paired with a loss function for regression.
#[derive(Clone, Copy)]
pub struct NormalizationCandidate {
    pub metric: MetricKind,
    pub score_formula: &'static str,
    pub loss_formula: &'static str,
    pub score: fn(f64) -> f64,
    pub loss: fn(f64) -> f64,
    /// The pairing adopted by [`LossKind::normalize`] and the assignment scores.
    pub chosen: bool,
    /// mAP (%) reported for this pairing on HRSC2016.
    pub reported_map: f64,
}

impl fmt::Debug for NormalizationCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalizationCandidate")
            .field("metric", &self.metric)
            .field("score_formula", &self.score_formula)
            .field("loss_formula", &self.loss_formula)
            .field("chosen", &self.chosen)
            .field("reported_map", &self.reported_map)
            .finish()
    }
}

fn inv_two_plus(d: f64) -> f64 {
    1.0 / (2.0 + d)
}
fn inv_two_plus_sqrt(d: f64) -> f64 {
    1.0 / (2.0 + d.sqrt())
}
fn inv_one_plus_sq(d: f64) -> f64 {
    1.0 / (1.0 + d * d)
}
fn inv_one_plus(d: f64) -> f64 {
    1.0 / (1.0 + d)
}
fn one_minus_exp_neg_sqrt(d: f64) -> f64 {
    1.0 - (-d.sqrt()).exp()
}
fn one_minus_exp_neg_sq(d: f64) -> f64 {
    1.0 - (-d * d).exp()
}
fn log1p(d: f64) -> f64 {
    d.ln_1p()
}
fn five_times(d: f64) -> f64 {
    5.0 * d
}

/// Every tabulated normalization pairing for `metric`, the adopted one flagged.
pub fn candidate_normalizations(metric: MetricKind) -> Vec<NormalizationCandidate> {
    type Row = (&'static str, fn(f64) -> f64, &'static str, fn(f64) -> f64, bool, f64);
    let rows: [Row; 4] = match metric {
        MetricKind::Kld => [
            ("1/(2+D)", inv_two_plus, "1-1/(2+sqrt(D))", kld_loss, true, 88.06),
            ("1/(2+D)", inv_two_plus, "1-exp(-sqrt(D))", one_minus_exp_neg_sqrt, false, 87.32),
            ("1/(2+D)", inv_two_plus, "1-exp(-D^2)", one_minus_exp_neg_sq, false, 50.73),
            ("1/(2+sqrt(D))", inv_two_plus_sqrt, "1-1/(2+sqrt(D))", kld_loss, false, 35.46),
        ],
        MetricKind::Bd => [
            ("1/(1+D^2)", inv_one_plus_sq, "1-1/(1+D)", bd_loss, true, 85.32),
            ("1/(1+D^2)", inv_one_plus_sq, "log(1+D)", log1p, false, 85.02),
            ("1/(1+D^2)", inv_one_plus_sq, "5*D", five_times, false, 60.68),
            ("1/(1+D)", inv_one_plus, "1-1/(1+D)", bd_loss, false, 85.12),
        ],
        MetricKind::Wd => [
            ("1/(2+D)", inv_two_plus, "1-1/(1+log(1+D))", wd_loss, true, 88.56),
            ("1/(2+D)", inv_two_plus, "1-1/(2+sqrt(D))", kld_loss, false, 87.04),
            ("1/(2+D)", inv_two_plus, "1-exp(-sqrt(D))", one_minus_exp_neg_sqrt, false, 88.24),
            ("1/(2+sqrt(D))", inv_two_plus_sqrt, "1-1/(1+log(1+D))", wd_loss, false, 87.54),
        ],
    };
    rows.into_iter()
        .map(|(sf, s, lf, l, chosen, map)| NormalizationCandidate {
            metric,
            score_formula: sf,
            loss_formula: lf,
            score: s,
            loss: l,
            chosen,
            reported_map: map,
        })
        .collect()
}

/// Acceptance bound on analytic-versus-numeric relative error.
pub const GRADIENT_TOLERANCE: f64 = 1e-5;

/// Point counts exercised by [`gradient_check`].
pub const GRADIENT_CHECK_POINT_COUNTS: [usize; 2] = [4, 9];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheck {
    pub loss: LossKind,
    pub max_relative_error: f64,
    /// Trial index and point count of the worst case.
    pub worst_trial: usize,
    pub worst_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub seed: u64,
    pub trials: usize,
    pub tolerance: f64,
    pub losses: Vec<LossCheck>,
    pub max_relative_error: f64,
    pub pass: bool,
}

/// A random gt and a random prediction of `k` points scattered around it.
pub fn random_gradient_case(rng: &mut impl Rng, k: usize) -> Result<(Gaussian2, PointSet)> {
    let b = Obb::new(
        rng.gen_range(-50.0..50.0),
        rng.gen_range(-50.0..50.0),
        rng.gen_range(2.0..40.0),
        rng.gen_range(1.0..10.0),
        rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
    )?;
    let spread = Vec2::new(b.w.max(b.h), b.w.max(b.h));
    let pts = (0..k)
        .map(|_| {
            b.center()
                + Vec2::new(
                    rng.gen_range(-spread.x..spread.x),
                    rng.gen_range(-spread.y..spread.y),
                )
        })
        .collect();
    Ok((obb_to_gaussian(&b)?, PointSet::new(pts)?))
}

/// Compares [`loss_grad_points`] with [`fd_gradient`] over `trials` seeded
/// configurations per loss and per point count.
pub fn gradient_check(kinds: &[LossKind], trials: usize, seed: u64) -> Result<GradientCheck> {
    if trials == 0 {
        return Err(Error::invalid("gradient check needs at least one trial"));
    }
    if kinds.is_empty() {
        return Err(Error::invalid("gradient check needs at least one loss"));
    }
    let mut losses = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = LossCheck {
            loss: kind,
            max_relative_error: 0.0,
            worst_trial: 0,
            worst_k: GRADIENT_CHECK_POINT_COUNTS[0],
        };
        for trial in 0..trials {
            for k in GRADIENT_CHECK_POINT_COUNTS {
                let (gt, pts) = random_gradient_case(&mut rng, k)?;
                let analytic = loss_grad_points(kind, &gt, &pts)?;
                let numeric = fd_gradient(kind, &gt, &pts, default_fd_step(&pts))?;
                let err = analytic.relative_error(&numeric);
                // NaN must not hide behind max().
                if !(err <= worst.max_relative_error) {
                    worst.max_relative_error = err;
                    worst.worst_trial = trial;
                    worst.worst_k = k;
                }
            }
        }
        losses.push(worst);
    }
    let max_relative_error = losses
        .iter()
        .map(|l| l.max_relative_error)
        .fold(0.0, |a: f64, b| if b.is_nan() { b } else { a.max(b) });
    Ok(GradientCheck {
        seed,
        trials,
        tolerance: GRADIENT_TOLERANCE,
        losses,
        max_relative_error,
        pass: max_relative_error < GRADIENT_TOLERANCE,
    })
}
