//! Similarity scores and positive/negative sample selection.
//!
//! Scores map a Gaussian distance into `(0, 1]`, larger meaning more similar.
//! Three strategies consume a [`ScoreMatrix`]:
//!
//! - fixed thresholds ([`assign_fixed`]),
//! - an ATSS-style per-gt threshold `mean + std` over a candidate pool
//!   ([`assign_atss`]),
//! - PATSS, which fits a two-component 1-D GMM to each pool and keeps the
//!   candidates claimed by the high-score component ([`assign_patss`]).
//!
//! The candidate pool for a ground truth is its `k` highest-scoring
//! proposals; ties go to the lower proposal index.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotated_iou, Gaussian2, Obb};
use crate::metrics::MetricKind;

/// Default candidate pool size per ground truth.
pub const DEFAULT_CANDIDATES: usize = 9;
/// Fixed-strategy thresholds used throughout the comparison experiments.
pub const DEFAULT_POS_THRESHOLD: f64 = 0.4;
pub const DEFAULT_NEG_THRESHOLD: f64 = 0.3;
/// Lower bound on GMM component variances.
pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const DEFAULT_EM_ITERS: usize = 100;
pub const DEFAULT_EM_TOL: f64 = 1e-10;

/// Normalized similarity in `(0, 1]`:
/// `1/(2+D_K)`, `1/(1+D_B²)`, `1/(2+D_W)`.
pub fn normalize_score(metric: MetricKind, distance: f64) -> f64 {
    match metric {
        MetricKind::Kld | MetricKind::Wd => 1.0 / (2.0 + distance),
        MetricKind::Bd => 1.0 / (1.0 + distance * distance),
    }
}

/// Similarity between ground truth and prediction.
pub fn score(metric: MetricKind, gt: &Gaussian2, pred: &Gaussian2) -> f64 {
    normalize_score(metric, metric.distance(gt, pred))
}

/// What a [`ScoreMatrix`] was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Kld,
    Bd,
    Wd,
    /// Rotated-box IoU; raw distance is `1 − IoU`.
    Iou,
}

impl From<MetricKind> for Similarity {
    fn from(m: MetricKind) -> Self {
        match m {
            MetricKind::Kld => Similarity::Kld,
            MetricKind::Bd => Similarity::Bd,
            MetricKind::Wd => Similarity::Wd,
        }
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Kld => "kld",
            Similarity::Bd => "bd",
            Similarity::Wd => "wd",
            Similarity::Iou => "iou",
        })
    }
}

/// Ground truths × proposals similarity, with the raw distances alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    similarity: Similarity,
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    distances: Vec<f64>,
}

impl ScoreMatrix {
    /// Builds a matrix from explicit rows of scores. Distances are left at NaN.
    pub fn from_scores(similarity: Similarity, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::invalid("score matrix must be non-empty"));
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::invalid("score matrix rows differ in length"));
        }
        let scores: Vec<f64> = rows.into_iter().flatten().collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("score matrix entries must be finite"));
        }
        Ok(Self {
            similarity,
            rows: n_rows,
            cols: n_cols,
            distances: vec![f64::NAN; scores.len()],
            scores,
        })
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    /// Number of ground truths.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of proposals.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn score(&self, gt: usize, proposal: usize) -> f64 {
        self.scores[gt * self.cols + proposal]
    }

    pub fn distance(&self, gt: usize, proposal: usize) -> f64 {
        self.distances[gt * self.cols + proposal]
    }

    pub fn row(&self, gt: usize) -> &[f64] {
        &self.scores[gt * self.cols..(gt + 1) * self.cols]
    }

    /// Best ground truth for a proposal; ties go to the lower index.
    pub fn best_gt(&self, proposal: usize) -> (usize, f64) {
        (0..self.rows)
            .map(|i| (i, self.score(i, proposal)))
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            })
    }

    /// Proposal indices of `gt`'s row, best first; ties go to the lower index.
    fn ranked(&self, gt: usize) -> Vec<usize> {
        let row = self.row(gt);
        let mut idx: Vec<usize> = (0..self.cols).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx
    }

    /// The `k` best proposals for `gt`.
    pub fn candidate_pool(&self, gt: usize, k: usize) -> Vec<usize> {
        let mut idx = self.ranked(gt);
        idx.truncate(k);
        idx
    }
}

/// Entry `(i, j) = score(metric, gts[i], proposals[j])`.
pub fn build_score_matrix(
    metric: MetricKind,
    gts: &[Gaussian2],
    proposals: &[Gaussian2],
) -> Result<ScoreMatrix> {
    if gts.is_empty() || proposals.is_empty() {
        return Err(Error::invalid(
            "score matrix needs at least one ground truth and one proposal",
        ));
    }
    let mut scores = Vec::with_capacity(gts.len() * proposals.len());
    let mut distances = Vec::with_capacity(scores.capacity());
    for gt in gts {
        for p in proposals {
            let d = metric.distance(gt, p);
            distances.push(d);
            scores.push(normalize_score(metric, d));
        }
    }
    Ok(ScoreMatrix {
        similarity: metric.into(),
        rows: gts.len(),
        cols: proposals.len(),
        scores,
        distances,
    })
}

/// Baseline matrix of rotated IoUs.
pub fn build_iou_matrix(gts: &[Obb], proposals: &[Obb]) -> Result<ScoreMatrix> {
    if gts.is_empty() || proposals.is_empty() {
        return Err(Error::invalid(
            "score matrix needs at least one ground truth and one proposal",
        ));
    }
    let mut scores = Vec::with_capacity(gts.len() * proposals.len());
    for gt in gts {
        for p in proposals {
            scores.push(rotated_iou(gt, p));
        }
    }
    let distances = scores.iter().map(|s| 1.0 - s).collect();
    Ok(ScoreMatrix {
        similarity: Similarity::Iou,
        rows: gts.len(),
        cols: proposals.len(),
        scores,
        distances,
    })
}

/// Per-proposal training label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive(usize),
    Negative,
    Ignore,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Positive(_) => "pos",
            Label::Negative => "neg",
            Label::Ignore => "ignore",
        }
    }

    pub fn gt(&self) -> Option<usize> {
        match self {
            Label::Positive(i) => Some(*i),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentResult {
    pub labels: Vec<Label>,
    pub positives_per_gt: Vec<usize>,
}

impl AssignmentResult {
    fn new(labels: Vec<Label>, num_gts: usize) -> Self {
        let mut positives_per_gt = vec![0; num_gts];
        for l in &labels {
            if let Label::Positive(i) = l {
                positives_per_gt[*i] += 1;
            }
        }
        Self {
            labels,
            positives_per_gt,
        }
    }

    pub fn count(&self, f: impl Fn(&Label) -> bool) -> usize {
        self.labels.iter().filter(|l| f(l)).count()
    }

    pub fn num_positive(&self) -> usize {
        self.count(|l| matches!(l, Label::Positive(_)))
    }

    pub fn num_negative(&self) -> usize {
        self.count(|l| matches!(l, Label::Negative))
    }

    pub fn num_ignore(&self) -> usize {
        self.count(|l| matches!(l, Label::Ignore))
    }

    /// `proposal_id,label,matched_gt,score,raw_distance`. Unmatched proposals
    /// report their best ground truth's score and an empty `matched_gt`.
    pub fn to_csv(&self, scores: &ScoreMatrix) -> String {
        let mut out = String::from("proposal_id,label,matched_gt,score,raw_distance\n");
        for (j, label) in self.labels.iter().enumerate() {
            let (gt, matched) = match label.gt() {
                Some(i) => (i, i.to_string()),
                None => (scores.best_gt(j).0, String::new()),
            };
            let dist = scores.distance(gt, j);
            let dist = if dist.is_nan() {
                String::new()
            } else {
                format!("{dist}")
            };
            out.push_str(&format!(
                "{j},{},{matched},{},{dist}\n",
                label.as_str(),
                scores.score(gt, j)
            ));
        }
        out
    }
}

/// Resolves per-gt positive claims: a proposal claimed by several ground
/// truths goes to the higher score, ties to the lower gt index.
fn resolve(scores: &ScoreMatrix, claims: &[Vec<usize>]) -> AssignmentResult {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; scores.cols()];
    for (i, claimed) in claims.iter().enumerate() {
        for &j in claimed {
            let s = scores.score(i, j);
            match best[j] {
                Some((_, bs)) if bs >= s => {}
                _ => best[j] = Some((i, s)),
            }
        }
    }
    let labels = best
        .into_iter()
        .map(|b| b.map_or(Label::Negative, |(i, _)| Label::Positive(i)))
        .collect();
    AssignmentResult::new(labels, scores.rows())
}

/// Fixed thresholds on each proposal's best score.
///
/// `≥ pos_thr` is positive for the argmax ground truth, `< neg_thr` is
/// negative, anything between is ignored. With `force_match`, every ground
/// truth then claims its best proposal (in order of decreasing best score),
/// falling back to its next-best one when that proposal was already claimed,
/// so each gt ends with a positive whenever there are at least as many
/// proposals as ground truths with a non-zero score.
pub fn assign_fixed(
    scores: &ScoreMatrix,
    pos_thr: f64,
    neg_thr: f64,
    force_match: bool,
) -> Result<AssignmentResult> {
    if !(0.0 <= neg_thr && neg_thr <= pos_thr) {
        return Err(Error::invalid(format!(
            "thresholds must satisfy 0 ≤ neg ≤ pos, got neg={neg_thr} pos={pos_thr}"
        )));
    }
    let mut labels: Vec<Label> = (0..scores.cols())
        .map(|j| {
            let (i, s) = scores.best_gt(j);
            if s >= pos_thr {
                Label::Positive(i)
            } else if s < neg_thr {
                Label::Negative
            } else {
                Label::Ignore
            }
        })
        .collect();

    if force_match {
        let mut order: Vec<(usize, Vec<usize>)> =
            (0..scores.rows()).map(|i| (i, scores.ranked(i))).collect();
        order.sort_by(|a, b| {
            let sa = scores.score(a.0, a.1[0]);
            let sb = scores.score(b.0, b.1[0]);
            sb.total_cmp(&sa).then(a.0.cmp(&b.0))
        });
        let mut claimed = vec![false; scores.cols()];
        for (i, ranked) in order {
            if let Some(&j) = ranked
                .iter()
                .find(|&&j| !claimed[j] && scores.score(i, j) > 0.0)
            {
                claimed[j] = true;
                labels[j] = Label::Positive(i);
            }
        }
    }
    Ok(AssignmentResult::new(labels, scores.rows()))
}

/// Dynamic threshold `mean + population std` over a candidate pool.
pub fn atss_threshold(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("threshold needs at least one value"));
    }
    // Welford: a constant pool yields exactly that constant.
    let (mut mean, mut m2) = (0.0, 0.0);
    for (n, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (n + 1) as f64;
        m2 += delta * (v - mean);
    }
    Ok(mean + (m2 / values.len() as f64).max(0.0).sqrt())
}

fn atss_pool_positives(scores: &ScoreMatrix, gt: usize, pool: &[usize]) -> Result<Vec<usize>> {
    let values: Vec<f64> = pool.iter().map(|&j| scores.score(gt, j)).collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // mean + std can exceed the pool maximum (e.g. one low outlier among
    // equal values); capping keeps the best candidate selected.
    let threshold = atss_threshold(&values)?.min(best);
    Ok(pool
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v >= threshold)
        .map(|(&j, _)| j)
        .collect())
}

fn check_pool_size(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("candidates_per_gt must be ≥ 1"));
    }
    Ok(())
}

/// ATSS-style assignment; every proposal not selected by any gt is negative.
pub fn assign_atss(scores: &ScoreMatrix, candidates_per_gt: usize) -> Result<AssignmentResult> {
    check_pool_size(candidates_per_gt)?;
    let claims = (0..scores.rows())
        .map(|i| atss_pool_positives(scores, i, &scores.candidate_pool(i, candidates_per_gt)))
        .collect::<Result<Vec<_>>>()?;
    Ok(resolve(scores, &claims))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl GmmComponent {
    fn log_density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        self.weight.ln()
            - 0.5 * (2.0 * std::f64::consts::PI * self.variance).ln()
            - 0.5 * d * d / self.variance
    }
}

/// Two-component 1-D Gaussian mixture, components ordered by mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub low: GmmComponent,
    pub high: GmmComponent,
}

impl GmmParams {
    fn ordered(a: GmmComponent, b: GmmComponent) -> Self {
        if b.mean >= a.mean {
            Self { low: a, high: b }
        } else {
            Self { low: b, high: a }
        }
    }

    fn log_sum(&self, x: f64) -> (f64, f64, f64) {
        let (a, b) = (self.low.log_density(x), self.high.log_density(x));
        let m = a.max(b);
        (a, b, m + ((a - m).exp() + (b - m).exp()).ln())
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        values.iter().map(|&x| self.log_sum(x).2).sum()
    }

    /// Posterior probability that `x` belongs to the high-mean component.
    pub fn posterior_high(&self, x: f64) -> f64 {
        let (_, b, total) = self.log_sum(x);
        (b - total).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmFit {
    pub params: GmmParams,
    /// Log-likelihood of the initial parameters, then after every EM step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// Set when the data cannot support two components (no spread, or a
    /// component lost all of its mass).
    pub degenerate: bool,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Expectation-maximization for a two-component 1-D GMM.
///
/// Means start at the 25th and 75th percentiles, weights at ½ and both
/// variances at half the sample variance. When those percentiles coincide
/// but the data still has spread, two distinct values drawn with `seed`
/// seed the means instead.
pub fn gmm_em_1d(values: &[f64], iters: usize, tol: f64, seed: u64) -> Result<GmmFit> {
    if values.len() < 4 {
        return Err(Error::invalid(format!(
            "GMM fit needs at least 4 values, got {}",
            values.len()
        )));
    }
    if iters == 0 {
        return Err(Error::invalid("GMM fit needs at least one iteration"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("GMM input values must be finite"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        let c = GmmComponent {
            weight: 0.5,
            mean: sorted[0],
            variance: VARIANCE_FLOOR,
        };
        let params = GmmParams { low: c, high: c };
        return Ok(GmmFit {
            log_likelihood: vec![params.log_likelihood(values)],
            params,
            converged: true,
            degenerate: true,
        });
    }

    let (mut m_lo, mut m_hi) = (percentile(&sorted, 0.25), percentile(&sorted, 0.75));
    if m_lo == m_hi {
        let mut distinct = sorted.clone();
        distinct.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked: Vec<f64> = distinct.choose_multiple(&mut rng, 2).copied().collect();
        m_lo = picked[0].min(picked[1]);
        m_hi = picked[0].max(picked[1]);
    }
    let v0 = (0.5 * var).max(VARIANCE_FLOOR);
    let mut params = GmmParams {
        low: GmmComponent {
            weight: 0.5,
            mean: m_lo,
            variance: v0,
        },
        high: GmmComponent {
            weight: 0.5,
            mean: m_hi,
            variance: v0,
        },
    };
    let mut trace = vec![params.log_likelihood(values)];
    let mut converged = false;
    let mut degenerate = false;
    let mut resp = vec![0.0; values.len()];

    for _ in 0..iters {
        // E-step: responsibility of the high component.
        for (r, &x) in resp.iter_mut().zip(values) {
            *r = params.posterior_high(x);
        }
        // M-step.
        let n_hi: f64 = resp.iter().sum();
        let n_lo = n - n_hi;
        if n_hi < 1e-12 * n || n_lo < 1e-12 * n {
            degenerate = true;
            break;
        }
        let mean_hi = resp.iter().zip(values).map(|(r, x)| r * x).sum::<f64>() / n_hi;
        let mean_lo = resp.iter().zip(values).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n_lo;
        let var_hi = resp
            .iter()
            .zip(values)
            .map(|(r, x)| r * (x - mean_hi) * (x - mean_hi))
            .sum::<f64>()
            / n_hi;
        let var_lo = resp
            .iter()
            .zip(values)
            .map(|(r, x)| (1.0 - r) * (x - mean_lo) * (x - mean_lo))
            .sum::<f64>()
            / n_lo;
        params = GmmParams::ordered(
            GmmComponent {
                weight: n_lo / n,
                mean: mean_lo,
                variance: var_lo.max(VARIANCE_FLOOR),
            },
            GmmComponent {
                weight: n_hi / n,
                mean: mean_hi,
                variance: var_hi.max(VARIANCE_FLOOR),
            },
        );
        let ll = params.log_likelihood(values);
        let gain = ll - trace[trace.len() - 1];
        trace.push(ll);
        if gain.abs() < tol {
            converged = true;
            break;
        }
    }
    if params.high.mean - params.low.mean <= 0.0 {
        degenerate = true;
    }
    Ok(GmmFit {
        params,
        log_likelihood: trace,
        converged,
        degenerate,
    })
}

/// PATSS: per-gt GMM over the candidate pool; candidates whose posterior
/// under the high-mean component exceeds ½ are positive. A gt whose pool is
/// too small for a fit, whose fit degenerates, or whose fit selects nothing
/// falls back to the ATSS rule.
pub fn assign_patss(
    scores: &ScoreMatrix,
    candidates_per_gt: usize,
    seed: u64,
) -> Result<AssignmentResult> {
    check_pool_size(candidates_per_gt)?;
    let mut claims = Vec::with_capacity(scores.rows());
    for i in 0..scores.rows() {
        let pool = scores.candidate_pool(i, candidates_per_gt);
        let values: Vec<f64> = pool.iter().map(|&j| scores.score(i, j)).collect();
        let mut selected = Vec::new();
        if values.len() >= 4 {
            let fit = gmm_em_1d(&values, DEFAULT_EM_ITERS, DEFAULT_EM_TOL, seed)?;
            if !fit.degenerate {
                selected = pool
                    .iter()
                    .zip(&values)
                    .filter(|(_, &v)| fit.params.posterior_high(v) > 0.5)
                    .map(|(&j, _)| j)
                    .collect();
            }
        }
        if selected.is_empty() {
            selected = atss_pool_positives(scores, i, &pool)?;
        }
        claims.push(selected);
    }
    Ok(resolve(scores, &claims))
}

/// Strategy selector used by experiments and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    Fixed {
        pos_thr: f64,
        neg_thr: f64,
        force_match: bool,
    },
    Atss {
        candidates_per_gt: usize,
    },
    Patss {
        candidates_per_gt: usize,
        seed: u64,
    },
}

impl Strategy {
    pub fn fixed_default() -> Self {
        Strategy::Fixed {
            pos_thr: DEFAULT_POS_THRESHOLD,
            neg_thr: DEFAULT_NEG_THRESHOLD,
            force_match: true,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Fixed { .. } => "fixed",
            Strategy::Atss { .. } => "atss",
            Strategy::Patss { .. } => "patss",
        }
    }

    pub fn assign(&self, scores: &ScoreMatrix) -> Result<AssignmentResult> {
        match *self {
            Strategy::Fixed {
                pos_thr,
                neg_thr,
                force_match,
            } => assign_fixed(scores, pos_thr, neg_thr, force_match),
            Strategy::Atss { candidates_per_gt } => assign_atss(scores, candidates_per_gt),
            Strategy::Patss {
                candidates_per_gt,
                seed,
            } => assign_patss(scores, candidates_per_gt, seed),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::obb_to_gaussian;
    use crate::linalg::{Sym2, Vec2};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn gauss(x: f64, y: f64, s: f64) -> Gaussian2 {
        Gaussian2::new(Vec2::new(x, y), Sym2::diag(s, s)).unwrap()
    }

    fn single_row(values: &[f64]) -> ScoreMatrix {
        ScoreMatrix::from_scores(Similarity::Kld, vec![values.to_vec()]).unwrap()
    }

    #[test]
    fn score_examples() {
        let g = gauss(1.0, 2.0, 3.0);
        assert_eq!(score(MetricKind::Kld, &g, &g), 0.5);
        assert_eq!(score(MetricKind::Bd, &g, &g), 1.0);
        assert_eq!(normalize_score(MetricKind::Wd, 2.0), 0.25);
    }

    #[test]
    fn scores_decrease_with_distance() {
        for m in MetricKind::ALL {
            let mut prev = normalize_score(m, 0.0);
            for i in 1..1000 {
                let s = normalize_score(m, i as f64 * 0.05);
                assert!(s < prev && s > 0.0);
                prev = s;
            }
        }
    }

    #[test]
    fn build_matrix_examples() {
        let g = gauss(0.0, 0.0, 1.0);
        let m = build_score_matrix(MetricKind::Kld, &[g], &[g]).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert_eq!(m.score(0, 0), 0.5);
        assert_eq!(m.distance(0, 0), 0.0);
        assert!(build_score_matrix(MetricKind::Kld, &[], &[g]).is_err());
        assert!(build_score_matrix(MetricKind::Kld, &[g], &[]).is_err());

        let gts = [gauss(0.0, 0.0, 1.0), gauss(3.0, 1.0, 2.0)];
        let props = [gauss(0.5, 0.0, 1.0), gauss(2.0, 2.0, 1.5), gauss(-1.0, 4.0, 0.5)];
        for metric in MetricKind::ALL {
            let m = build_score_matrix(metric, &gts, &props).unwrap();
            assert_eq!((m.rows(), m.cols()), (2, 3));
            for (i, g) in gts.iter().enumerate() {
                for (j, p) in props.iter().enumerate() {
                    assert_eq!(m.score(i, j), score(metric, g, p));
                    assert_eq!(m.distance(i, j), metric.distance(g, p));
                }
            }
            let shuffled = [props[2], props[0], props[1]];
            let s = build_score_matrix(metric, &gts, &shuffled).unwrap();
            for i in 0..2 {
                assert_eq!(s.row(i), &[m.score(i, 2), m.score(i, 0), m.score(i, 1)]);
            }
        }
    }

    #[test]
    fn fixed_examples() {
        let all_pos = single_row(&[0.45; 5]);
        let r = assign_fixed(&all_pos, 0.4, 0.3, false).unwrap();
        assert!(r.labels.iter().all(|l| *l == Label::Positive(0)));

        let all_neg = single_row(&[0.1; 5]);
        let r = assign_fixed(&all_neg, 0.4, 0.3, false).unwrap();
        assert!(r.labels.iter().all(|l| *l == Label::Negative));

        let band = single_row(&[0.35]);
        let r = assign_fixed(&band, 0.4, 0.3, false).unwrap();
        assert_eq!(r.labels, vec![Label::Ignore]);

        assert!(assign_fixed(&band, 0.3, 0.4, false).is_err());
        assert!(assign_fixed(&band, 0.4, -0.1, false).is_err());
    }

    #[test]
    fn fixed_equal_thresholds_leave_nothing_ignored() {
        let m = single_row(&[0.1, 0.35, 0.4, 0.45, 0.399]);
        let r = assign_fixed(&m, 0.35, 0.35, false).unwrap();
        assert_eq!(r.num_ignore(), 0);
        assert_eq!(r.num_positive() + r.num_negative(), 5);
    }

    #[test]
    fn force_match_gives_each_gt_a_positive() {
        // Both gts prefer proposal 0; the weaker claim moves to its runner-up.
        let m = ScoreMatrix::from_scores(
            Similarity::Kld,
            vec![vec![0.2, 0.1, 0.05], vec![0.25, 0.05, 0.15]],
        )
        .unwrap();
        let r = assign_fixed(&m, 0.4, 0.3, true).unwrap();
        assert_eq!(r.labels[0], Label::Positive(1));
        assert_eq!(r.labels[1], Label::Positive(0));
        assert_eq!(r.labels[2], Label::Negative);
        assert_eq!(r.positives_per_gt, vec![1, 1]);
    }

    #[test]
    fn atss_threshold_examples() {
        let t = atss_threshold(&[0.1, 0.2, 0.3]).unwrap();
        assert!((t - (0.2 + (0.02f64 / 3.0).sqrt())).abs() < 1e-15);
        assert!((t - 0.281650).abs() < 1e-6);
        assert_eq!(atss_threshold(&[0.37; 7]).unwrap(), 0.37);
        assert!(atss_threshold(&[]).is_err());
    }

    #[test]
    fn atss_threshold_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let n = rng.gen_range(1..40);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let oracle = mean + var.sqrt();
            assert!((atss_threshold(&v).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn atss_examples() {
        let mut row = vec![0.1; 20];
        row[7] = 0.5;
        let r = assign_atss(&single_row(&row), 9).unwrap();
        assert_eq!(r.labels[7], Label::Positive(0));
        assert_eq!(r.num_positive(), 1);

        let r = assign_atss(&single_row(&[0.3; 12]), 9).unwrap();
        assert_eq!(r.num_positive(), 9);
        assert!(assign_atss(&single_row(&[0.3]), 0).is_err());
    }

    #[test]
    fn atss_always_keeps_best_candidate() {
        // mean + std exceeds the max here: one low value among equal ones.
        let mut row = vec![0.4; 9];
        row[3] = 0.05;
        let values = row.clone();
        assert!(atss_threshold(&values).unwrap() > 0.4);
        let r = assign_atss(&single_row(&row), 9).unwrap();
        assert_eq!(r.num_positive(), 8);
    }

    #[test]
    fn atss_conflict_goes_to_higher_score() {
        let m = ScoreMatrix::from_scores(
            Similarity::Kld,
            vec![vec![0.45, 0.1, 0.1, 0.1], vec![0.48, 0.1, 0.2, 0.1]],
        )
        .unwrap();
        let r = assign_atss(&m, 4).unwrap();
        assert_eq!(r.labels[0], Label::Positive(1));
    }

    #[test]
    fn gmm_recovers_synthetic_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = Normal::new(0.1, 0.01).unwrap();
        let b = Normal::new(0.45, 0.01).unwrap();
        let mut v: Vec<f64> = (0..200).map(|_| a.sample(&mut rng)).collect();
        v.extend((0..200).map(|_| b.sample(&mut rng)));
        let fit = gmm_em_1d(&v, 200, 1e-12, 0).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.params.low.mean - 0.1).abs() < 0.02);
        assert!((fit.params.high.mean - 0.45).abs() < 0.02);
        assert!((fit.params.low.weight + fit.params.high.weight - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gmm_constant_values_are_degenerate() {
        let fit = gmm_em_1d(&[0.3; 6], 10, 1e-9, 0).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.params.low.mean, 0.3);
        assert_eq!(fit.params.high.mean, 0.3);
        assert_eq!(fit.params.high.variance, VARIANCE_FLOOR);
        assert!(gmm_em_1d(&[0.1, 0.2, 0.3], 10, 1e-9, 0).is_err());
        assert!(gmm_em_1d(&[0.1, 0.2, 0.3, 0.4], 0, 1e-9, 0).is_err());
    }

    #[test]
    fn gmm_log_likelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(4..40);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.5)).collect();
            let fit = gmm_em_1d(&v, 200, 0.0, 1).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn gmm_tied_quartiles_use_seeded_init() {
        let v = [0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.9, 0.1];
        let a = gmm_em_1d(&v, 50, 1e-12, 3).unwrap();
        let b = gmm_em_1d(&v, 50, 1e-12, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn patss_selects_high_cluster() {
        let row = [0.1, 0.45, 0.11, 0.09, 0.46, 0.1, 0.44, 0.105, 0.095, 0.02, 0.01];
        let r = assign_patss(&single_row(&row), 9, 0).unwrap();
        let pos: Vec<usize> = (0..row.len()).filter(|&j| r.labels[j].gt().is_some()).collect();
        assert_eq!(pos, vec![1, 4, 6]);
    }

    #[test]
    fn patss_constant_pool_falls_back_to_atss() {
        let r = assign_patss(&single_row(&[0.3; 12]), 9, 0).unwrap();
        assert_eq!(r.num_positive(), 9);
    }

    #[test]
    fn patss_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..30).map(|_| rng.gen_range(0.01..0.5)).collect())
            .collect();
        let m = ScoreMatrix::from_scores(Similarity::Wd, rows).unwrap();
        assert_eq!(assign_patss(&m, 9, 7).unwrap(), assign_patss(&m, 9, 7).unwrap());
    }

    #[test]
    fn strategies_are_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..25).map(|_| rng.gen_range(0.01..0.5)).collect())
            .collect();
        let mut perm: Vec<usize> = (0..25).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| perm.iter().map(|&j| r[j]).collect())
            .collect();
        let a = ScoreMatrix::from_scores(Similarity::Kld, rows).unwrap();
        let b = ScoreMatrix::from_scores(Similarity::Kld, permuted).unwrap();
        for strategy in [
            Strategy::fixed_default(),
            Strategy::Atss { candidates_per_gt: 9 },
            Strategy::Patss { candidates_per_gt: 9, seed: 1 },
        ] {
            let ra = strategy.assign(&a).unwrap();
            let rb = strategy.assign(&b).unwrap();
            for (slot, &j) in perm.iter().enumerate() {
                assert_eq!(rb.labels[slot], ra.labels[j], "{}", strategy.name());
            }
        }
    }

    #[test]
    fn iou_matrix_and_csv() {
        let gt = Obb::new(0.0, 0.0, 4.0, 2.0, 0.0).unwrap();
        let props = [gt, Obb::new(50.0, 0.0, 4.0, 2.0, 0.0).unwrap()];
        let m = build_iou_matrix(&[gt], &props).unwrap();
        assert_eq!(m.score(0, 0), 1.0);
        assert_eq!(m.score(0, 1), 0.0);
        let r = assign_fixed(&m, 0.5, 0.4, false).unwrap();
        let csv = r.to_csv(&m);
        assert_eq!(
            csv,
            "proposal_id,label,matched_gt,score,raw_distance\n0,pos,0,1,0\n1,neg,,0,1\n"
        );
        let g = obb_to_gaussian(&gt).unwrap();
        let m = build_score_matrix(MetricKind::Kld, &[g], &[g]).unwrap();
        let r = assign_fixed(&m, 0.4, 0.3, false).unwrap();
        assert_eq!(r.to_csv(&m).lines().nth(1).unwrap(), "0,pos,0,0.5,0");
    }
}
