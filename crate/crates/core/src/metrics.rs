//! Distances between 2-D Gaussians.
//!
//! All three functions take `(ground_truth, prediction)` in that order. Only
//! KLD is asymmetric, but the order is kept uniform so call sites never have
//! to think about which metric they hold.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Gaussian2;
use crate::linalg::Sym2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Kld,
    Bd,
    Wd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Kld, MetricKind::Bd, MetricKind::Wd];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Kld => "kld",
            MetricKind::Bd => "bd",
            MetricKind::Wd => "wd",
        }
    }

    /// Evaluates this distance, ground truth first.
    pub fn distance(self, gt: &Gaussian2, pred: &Gaussian2) -> f64 {
        match self {
            MetricKind::Kld => kld(gt, pred),
            MetricKind::Bd => bd(gt, pred),
            MetricKind::Wd => wd(gt, pred),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kld" => Ok(MetricKind::Kld),
            "bd" => Ok(MetricKind::Bd),
            "wd" => Ok(MetricKind::Wd),
            other => Err(Error::invalid(format!(
                "unknown metric `{other}` (expected kld, bd or wd)"
            ))),
        }
    }
}

/// `D_K(N_g, N_p) = ½ (tr(Σp⁻¹Σg) + ln(|Σp|/|Σg|) − 2 + Δμᵀ Σp⁻¹ Δμ)`.
pub fn kld(gt: &Gaussian2, pred: &Gaussian2) -> f64 {
    let (sg, sp) = (gt.sigma(), pred.sigma());
    let det_p = sp.det();
    // tr(adj(Σp)·Σg) / |Σp|: cancels exactly when Σp = Σg.
    let adj_trace = (sp.yy * sg.xx + sp.xx * sg.yy) - 2.0 * sp.xy * sg.xy;
    let d = pred.mu() - gt.mu();
    let value = 0.5
        * (adj_trace / det_p + (det_p / sg.det()).ln() - 2.0 + sp.inverse().quad_form(d));
    value.max(0.0)
}

/// `D_B = ⅛ Δμᵀ Σ⁻¹ Δμ + ½ ln(|Σ| / √(|Σg||Σp|))`, `Σ = ½(Σg + Σp)`.
pub fn bd(gt: &Gaussian2, pred: &Gaussian2) -> f64 {
    let (sg, sp) = (gt.sigma(), pred.sigma());
    let avg = (sg + sp).scale(0.5);
    let d = gt.mu() - pred.mu();
    let value = avg.inverse().quad_form(d) / 8.0
        + 0.5 * (avg.det() / (sg.det() * sp.det()).sqrt()).ln();
    value.max(0.0)
}

/// Squared 2-Wasserstein distance
/// `‖Δμ‖² + Tr Σg + Tr Σp − 2 Tr((Σp^½ Σg Σp^½)^½)`.
pub fn wd(gt: &Gaussian2, pred: &Gaussian2) -> f64 {
    let (sg, sp) = (gt.sigma(), pred.sigma());
    let (tg, tp) = (sg.trace(), sp.trace());
    let root_det = (sp.det() * sg.det()).sqrt();
    let coupling = trace_sqrt_product_unchecked(sp, sg);
    // tg + tp − 2c rewritten as ((tg + tp)² − 4c²) / (tg + tp + 2c), with
    // tg·tp − tr(Σp Σg) = tr(adj(Σp)·Σg). The difference is then formed
    // without cancellation and is exactly zero when Σp = Σg.
    let adj_trace = (sp.yy * sg.xx + sp.xx * sg.yy) - 2.0 * sp.xy * sg.xy;
    let numerator = (tg - tp) * (tg - tp) + 4.0 * (adj_trace - 2.0 * root_det);
    let value = (pred.mu() - gt.mu()).norm_sq() + numerator / (tg + tp + 2.0 * coupling);
    value.max(0.0)
}

fn require_spd(m: Sym2, what: &str) -> Result<()> {
    if m.is_positive_definite() {
        Ok(())
    } else {
        Err(Error::degenerate(format!("{what} is not positive definite")))
    }
}

/// Principal square root of a 2×2 SPD matrix:
/// `(M + √det M · I) / √(tr M + 2√det M)`.
pub fn spd_sqrt(m: Sym2) -> Result<Sym2> {
    require_spd(m, "matrix")?;
    let s = m.det().sqrt();
    let t = (m.trace() + 2.0 * s).sqrt();
    Ok(m.add_diag(s).scale(1.0 / t))
}

/// `Tr((A^½ B A^½)^½) = √(Tr(AB) + 2√(det A · det B))`.
pub fn trace_sqrt_product(a: Sym2, b: Sym2) -> Result<f64> {
    require_spd(a, "first matrix")?;
    require_spd(b, "second matrix")?;
    Ok(trace_sqrt_product_unchecked(a, b))
}

pub(crate) fn trace_sqrt_product_unchecked(a: Sym2, b: Sym2) -> f64 {
    (a.trace_product(b) + 2.0 * (a.det() * b.det()).sqrt()).sqrt()
}
