//! Desk-scale experiments: synthetic scenes, point-set gradient descent,
//! angle-boundary sweeps and assignment-strategy comparisons.
//!
//! Everything here is a pure function of its inputs and a seed.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{
    build_iou_matrix, build_score_matrix, AssignmentResult, Label, ScoreMatrix, Similarity,
    Strategy,
};
use crate::error::{Error, Result};
use crate::geometry::{
    fit_gaussian_mle, gaussian_to_obb, obb_to_gaussian, obb_to_qbb, Gaussian2, Obb, PointSet,
};
use crate::linalg::Vec2;
use crate::losses::{loss, loss_grad_points, LossKind};
use crate::metrics::MetricKind;
use crate::svg::SvgDoc;

/// Parameters for [`gen_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub num_gts: usize,
    pub categories: Vec<String>,
    /// Long side over short side, sampled uniformly; must lie within `[1, 20]`.
    pub aspect_range: (f64, f64),
    /// Long side length, sampled uniformly.
    pub size_range: (f64, f64),
    /// Field width and height; gt centers are uniform over it.
    pub extent: (f64, f64),
    /// Columns and rows of the isotropic proposal grid.
    pub grid: (usize, usize),
    /// Jittered copies of every gt added to the proposals.
    pub jitter_copies: usize,
    /// Relative perturbation of jittered copies; 0 gives exact copies.
    pub jitter: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_gts: 8,
            categories: vec!["ship".into(), "vehicle".into(), "bridge".into()],
            aspect_range: (1.0, 6.0),
            size_range: (16.0, 96.0),
            extent: (512.0, 512.0),
            grid: (16, 16),
            jitter_copies: 2,
            jitter: 0.1,
        }
    }
}

impl SceneConfig {
    pub fn proposal_count(&self) -> usize {
        self.grid.0 * self.grid.1 + self.num_gts * self.jitter_copies
    }

    fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::invalid(format!(
                    "scene config `{name}` must be a positive range, got ({lo}, {hi})"
                )));
            }
            Ok(())
        };
        if self.num_gts == 0 {
            return Err(Error::invalid("scene config `num_gts` must be ≥ 1"));
        }
        if self.categories.is_empty() || self.categories.iter().any(String::is_empty) {
            return Err(Error::invalid("scene config `categories` must be non-empty names"));
        }
        range("aspect_range", self.aspect_range)?;
        if self.aspect_range.0 < 1.0 || self.aspect_range.1 > 20.0 {
            return Err(Error::invalid("scene config `aspect_range` must lie within [1, 20]"));
        }
        range("size_range", self.size_range)?;
        range("extent", self.extent)?;
        if self.proposal_count() == 0 {
            return Err(Error::invalid("scene config yields no proposals"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::invalid("scene config `jitter` must be ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub obb: Obb,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Grid { col: usize, row: usize },
    Jittered { gt: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub gaussian: Gaussian2,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub config: SceneConfig,
    pub seed: u64,
    pub gts: Vec<GroundTruth>,
    pub proposals: Vec<Proposal>,
}

impl Scene {
    pub fn gt_gaussians(&self) -> Result<Vec<Gaussian2>> {
        self.gts.iter().map(|g| obb_to_gaussian(&g.obb)).collect()
    }

    pub fn proposal_gaussians(&self) -> Vec<Gaussian2> {
        self.proposals.iter().map(|p| p.gaussian).collect()
    }

    pub fn to_svg(&self) -> String {
        let mut doc = SvgDoc::new();
        for g in &self.gts {
            doc.add_box("gts", "green", &g.obb);
        }
        for p in &self.proposals {
            doc.add_ellipse("proposals", "steelblue", &p.gaussian);
        }
        doc.render()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Samples a scene. Proposals are the grid first (row-major), then the
/// jittered copies grouped by gt.
pub fn gen_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };

    let mut gts = Vec::with_capacity(config.num_gts);
    for _ in 0..config.num_gts {
        let long = sample(&mut rng, config.size_range);
        let aspect = sample(&mut rng, config.aspect_range);
        let obb = Obb::new(
            rng.gen_range(0.0..config.extent.0),
            rng.gen_range(0.0..config.extent.1),
            long,
            long / aspect,
            rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
        )?;
        let category = config.categories[rng.gen_range(0..config.categories.len())].clone();
        gts.push(GroundTruth { obb, category });
    }

    let mut proposals = Vec::with_capacity(config.proposal_count());
    let size = median(gts.iter().map(|g| (g.obb.w * g.obb.h).sqrt()).collect());
    let (cols, rows) = config.grid;
    for row in 0..rows {
        for col in 0..cols {
            let center = Vec2::new(
                (col as f64 + 0.5) * config.extent.0 / cols as f64,
                (row as f64 + 0.5) * config.extent.1 / rows as f64,
            );
            proposals.push(Proposal {
                gaussian: Gaussian2::isotropic(center, size * size / 4.0)?,
                provenance: Provenance::Grid { col, row },
            });
        }
    }
    for (i, gt) in gts.iter().enumerate() {
        for _ in 0..config.jitter_copies {
            let b = gt.obb;
            let j = config.jitter;
            let mut u = || rng.gen_range(-1.0..=1.0) * j;
            let jittered = Obb::new(
                b.cx + u() * b.w,
                b.cy + u() * b.h,
                b.w * (1.0 + u()).max(0.05),
                b.h * (1.0 + u()).max(0.05),
                b.theta + u() * FRAC_PI_4,
            )?;
            proposals.push(Proposal {
                gaussian: obb_to_gaussian(&jittered)?,
                provenance: Provenance::Jittered { gt: i },
            });
        }
    }
    Ok(Scene {
        config: config.clone(),
        seed,
        gts,
        proposals,
    })
}

/// Per-category mean aspect ratio (long side over short side).
pub fn aspect_ratio_stats<'a, I>(gts: I) -> BTreeMap<String, f64>
where
    I: IntoIterator<Item = (&'a Obb, &'a str)>,
{
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (b, cat) in gts {
        let e = acc.entry(cat.to_string()).or_insert((0.0, 0));
        e.0 += b.aspect_ratio();
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

/// Tuned gradient-descent step per loss kind for the standard convergence
/// suite (gt long side 20–60, 20% translation).
pub fn default_step_size(kind: LossKind) -> f64 {
    match kind {
        LossKind::Lkld => 5.0,
        LossKind::Lbd => 50.0,
        LossKind::Lwd => 4.0,
    }
}

pub const DEFAULT_OPTIMIZE_STEPS: usize = 3000;

/// Distance growth (relative to `max(initial, 1)`) treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// A point farther than this many gt diagonals from the gt center means the
/// iterate has escaped. The bounded losses flatten out far away, so a runaway
/// step may never show up as distance growth.
pub const ESCAPE_FACTOR: f64 = 50.0;

/// Required relative reduction of the raw distance for convergence.
pub const CONVERGENCE_RATIO: f64 = 0.01;

/// Distances below this count as converged regardless of the start.
pub const CONVERGENCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub loss: f64,
    pub distance: f64,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum OptimizationStatus {
    Completed,
    Diverged { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationTrace {
    pub kind: LossKind,
    pub step_size: f64,
    pub steps: Vec<TraceStep>,
    pub status: OptimizationStatus,
    /// Decoded from the last finite step.
    pub terminal: Obb,
}

impl OptimizationTrace {
    pub fn initial_distance(&self) -> f64 {
        self.steps[0].distance
    }

    pub fn final_distance(&self) -> f64 {
        self.steps[self.steps.len() - 1].distance
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, OptimizationStatus::Diverged { .. })
    }

    fn within_target(&self, d: f64) -> bool {
        d <= CONVERGENCE_RATIO * self.initial_distance() || d <= CONVERGENCE_FLOOR
    }

    /// Finished without diverging and with the final distance at most 1% of
    /// the initial one.
    pub fn converged(&self) -> bool {
        !self.diverged() && self.within_target(self.final_distance())
    }

    /// First step at which the distance met the convergence target.
    pub fn converged_at(&self) -> Option<usize> {
        self.steps
            .iter()
            .find(|s| self.within_target(s.distance))
            .map(|s| s.step)
    }

    /// `step,loss,distance,x0,y0,...` with one row per recorded step.
    pub fn to_csv(&self) -> String {
        let k = self.steps[0].points.len();
        let mut out = String::from("step,loss,distance");
        for i in 0..k {
            out.push_str(&format!(",x{i},y{i}"));
        }
        out.push('\n');
        for s in &self.steps {
            out.push_str(&format!("{},{},{}", s.step, s.loss, s.distance));
            for p in &s.points {
                out.push_str(&format!(",{},{}", p.x, p.y));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_svg(&self, gt: &Obb) -> String {
        let mut doc = SvgDoc::new();
        let radius = 0.02 * gt.w.max(gt.h);
        doc.add_box("gt", "green", gt);
        if let Ok(g) = obb_to_gaussian(gt) {
            doc.add_ellipse("gt-gaussian", "green", &g);
        }
        for p in &self.steps[0].points {
            doc.add_point("initial-points", "gray", *p, radius);
        }
        let last = &self.steps[self.steps.len() - 1].points;
        for p in last {
            doc.add_point("final-points", "red", *p, radius);
        }
        if let Ok(g) = fit_gaussian_mle(last) {
            doc.add_ellipse("final-gaussian", "red", &g);
        }
        doc.add_box("terminal", "orange", &self.terminal);
        doc.render()
    }
}

/// Plain fixed-step gradient descent on the point coordinates.
///
/// Stops early, marking the trace as diverged, when a step produces a
/// non-finite value, a degenerate point set, a distance that exceeds
/// [`DIVERGENCE_FACTOR`] times `max(initial distance, 1)`, or a point beyond
/// [`ESCAPE_FACTOR`] gt diagonals from the gt center.
pub fn optimize_pointset(
    gt: &Obb,
    init: &PointSet,
    kind: LossKind,
    step_size: f64,
    steps: usize,
) -> Result<OptimizationTrace> {
    if steps == 0 {
        return Err(Error::invalid("optimization needs at least one step"));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::invalid(format!("step size must be > 0, got {step_size}")));
    }
    let target = obb_to_gaussian(gt)?;
    let first = loss_grad_points(kind, &target, init)?;
    let limit = DIVERGENCE_FACTOR * first.distance.max(1.0);
    let escape = ESCAPE_FACTOR * gt.w.hypot(gt.h);

    let mut records = vec![TraceStep {
        step: 0,
        loss: first.value,
        distance: first.distance,
        points: init.points().to_vec(),
    }];
    let mut grad = first.d_points;
    let mut points = init.points().to_vec();
    let mut status = OptimizationStatus::Completed;

    for step in 1..=steps {
        let next: Vec<Vec2> = points
            .iter()
            .zip(&grad)
            .map(|(&p, &g)| p - g.scale(step_size))
            .collect();
        let outcome = PointSet::new(next.clone()).and_then(|ps| loss_grad_points(kind, &target, &ps));
        let g = match outcome {
            Ok(g) => g,
            Err(e) => {
                status = OptimizationStatus::Diverged {
                    step,
                    reason: e.to_string(),
                };
                break;
            }
        };
        let finite = g.value.is_finite()
            && g.distance.is_finite()
            && g.d_points.iter().all(|v| v.is_finite());
        let reach = next
            .iter()
            .map(|p| (*p - gt.center()).norm())
            .fold(0.0, f64::max);
        let reason = if !finite {
            Some("non-finite loss or gradient".to_string())
        } else if g.distance > limit {
            Some(format!("distance {} exceeded divergence limit {limit}", g.distance))
        } else if reach > escape {
            Some(format!("point {reach} away from the gt center, limit {escape}"))
        } else {
            None
        };
        if let Some(reason) = reason {
            status = OptimizationStatus::Diverged { step, reason };
            break;
        }
        records.push(TraceStep {
            step,
            loss: g.value,
            distance: g.distance,
            points: next.clone(),
        });
        points = next;
        grad = g.d_points;
    }

    let terminal = gaussian_to_obb(&fit_gaussian_mle(&points)?);
    Ok(OptimizationTrace {
        kind,
        step_size,
        steps: records,
        status,
        terminal,
    })
}

/// The standard convergence case for `seed`: a gt with long side in
/// `[20, 60]` and aspect ratio in `[1.5, 4]`, and its corners translated by
/// `fraction · w` in a random direction.
pub fn convergence_case(seed: u64, fraction: f64) -> Result<(Obb, PointSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.gen_range(20.0..60.0);
    let aspect = rng.gen_range(1.5..4.0);
    let gt = Obb::new(
        rng.gen_range(0.0..100.0),
        rng.gen_range(0.0..100.0),
        w,
        w / aspect,
        rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
    )?;
    let init = translated_corners(&gt, fraction, rng.gen())?;
    Ok((gt, init))
}

/// The box's corners shifted by `fraction · w` in a direction drawn from `seed`.
pub fn translated_corners(gt: &Obb, fraction: f64, seed: u64) -> Result<PointSet> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(Error::invalid(format!("translation fraction must be ≥ 0, got {fraction}")));
    }
    let dir = ChaCha8Rng::seed_from_u64(seed).gen_range(-PI..PI);
    let shift = Vec2::new(dir.cos(), dir.sin()).scale(fraction * gt.w);
    PointSet::new(obb_to_qbb(gt).corners.iter().map(|&p| p + shift).collect())
}

/// Represents `(w, h, θ)` the way OpenCV's legacy rotated rectangles do:
/// `θ ∈ [-π/2, 0)`, swapping `w` and `h` at every quarter turn.
pub fn opencv_representation(w: f64, h: f64, theta: f64) -> (f64, f64, f64) {
    let (mut w, mut h, mut t) = (w, h, theta);
    let quarters = ((t + FRAC_PI_2) / FRAC_PI_2).floor();
    t -= quarters * FRAC_PI_2;
    if t >= 0.0 {
        t -= FRAC_PI_2;
    }
    if (quarters as i64).rem_euclid(2) == 1 {
        std::mem::swap(&mut w, &mut h);
    }
    (w, h, t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySweep {
    pub thetas: Vec<f64>,
    /// Gaussian loss between the fixed prediction and the rotating gt.
    pub grep: Vec<f64>,
    /// Sum of absolute normalized parameter deltas in the OpenCV convention.
    pub contrast: Vec<f64>,
}

impl BoundarySweep {
    pub fn adjacent_deltas(curve: &[f64]) -> Vec<f64> {
        curve.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
    }

    pub fn max_jump(curve: &[f64]) -> f64 {
        Self::adjacent_deltas(curve).into_iter().fold(0.0, f64::max)
    }

    pub fn median_delta(curve: &[f64]) -> f64 {
        median(Self::adjacent_deltas(curve))
    }

    /// Largest adjacent change among the samples straddling `theta`.
    pub fn jump_at(&self, curve: &[f64], theta: f64) -> f64 {
        let k = self
            .thetas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - theta).abs().total_cmp(&(b.1 - theta).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(curve.len() - 1);
        (lo..hi)
            .map(|i| (curve[i + 1] - curve[i]).abs())
            .fold(0.0, f64::max)
    }
}

fn contrast_loss(pred: (f64, f64, f64, f64, f64), gt: (f64, f64, f64, f64, f64)) -> f64 {
    let (px, py, pw, ph, pt) = pred;
    let (gx, gy, gw, gh, gth) = gt;
    (gx - px).abs() / pw + (gy - py).abs() / ph + (gw / pw).ln().abs() + (gh / ph).ln().abs()
        + (gth - pt).abs()
}

/// Sweeps the gt angle over `[-π, π)` with the prediction fixed at the
/// template's own corners. The gt passes through the OpenCV representation
/// before either loss sees it.
pub fn boundary_sweep(template: &Obb, kind: LossKind, samples: usize) -> Result<BoundarySweep> {
    if samples < 100 {
        return Err(Error::invalid(format!(
            "boundary sweep needs at least 100 samples, got {samples}"
        )));
    }
    template.validate()?;
    let pred_points = obb_to_qbb(template).corners;
    let pred = fit_gaussian_mle(&pred_points)?;
    let (pw, ph, pt) = opencv_representation(template.w, template.h, template.theta);
    let pred_params = (template.cx, template.cy, pw, ph, pt);

    let mut thetas = Vec::with_capacity(samples);
    let mut grep = Vec::with_capacity(samples);
    let mut contrast = Vec::with_capacity(samples);
    for k in 0..samples {
        let theta = -PI + 2.0 * PI * k as f64 / samples as f64;
        let (w, h, t) = opencv_representation(template.w, template.h, theta);
        let gt = Obb::new(template.cx, template.cy, w, h, t)?;
        thetas.push(theta);
        grep.push(loss(kind, &obb_to_gaussian(&gt)?, &pred));
        contrast.push(contrast_loss(pred_params, (gt.cx, gt.cy, w, h, t)));
    }
    Ok(BoundarySweep {
        thetas,
        grep,
        contrast,
    })
}

/// Nine points whose maximum-likelihood Gaussian equals the box's: a 3×3
/// grid scaled so its population covariance is `diag(w²/4, h²/4)`.
pub fn matched_point_set(b: &Obb) -> Result<PointSet> {
    // The {-1, 0, 1}² grid has variance 2/3 per axis.
    let s = (1.5f64).sqrt();
    let mut pts = Vec::with_capacity(9);
    for gy in [-1.0, 0.0, 1.0] {
        for gx in [-1.0, 0.0, 1.0] {
            let local = Vec2::new(gx * s * b.w / 2.0, gy * s * b.h / 2.0);
            pts.push(b.center() + local.rotate(b.theta));
        }
    }
    PointSet::new(pts)
}

/// Which scores drive an assignment experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreSource {
    Metric(MetricKind),
    /// Rotated IoU between gt boxes and decoded proposal boxes.
    Iou,
}

impl ScoreSource {
    pub fn similarity(self) -> Similarity {
        match self {
            ScoreSource::Metric(m) => m.into(),
            ScoreSource::Iou => Similarity::Iou,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub strategy: Strategy,
    pub similarity: Similarity,
    pub num_gts: usize,
    pub num_proposals: usize,
    pub positives_per_gt: Vec<usize>,
    pub num_positive: usize,
    pub num_negative: usize,
    pub num_ignore: usize,
    /// Mean score of positives against their matched gt.
    pub mean_positive_score: Option<f64>,
    /// Fraction of jittered copies labeled positive for their source gt.
    pub recovery_rate: Option<f64>,
    pub runtime_ms: f64,
}

/// Report plus the full matrix and labels, for CSV export.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: ExperimentReport,
    pub scores: ScoreMatrix,
    pub assignment: AssignmentResult,
}

pub fn run_assignment_experiment(
    scene: &Scene,
    strategy: &Strategy,
    source: ScoreSource,
) -> Result<Experiment> {
    let start = Instant::now();
    let scores = match source {
        ScoreSource::Metric(m) => {
            build_score_matrix(m, &scene.gt_gaussians()?, &scene.proposal_gaussians())?
        }
        ScoreSource::Iou => {
            let gts: Vec<Obb> = scene.gts.iter().map(|g| g.obb).collect();
            let props: Vec<Obb> = scene
                .proposals
                .iter()
                .map(|p| gaussian_to_obb(&p.gaussian))
                .collect();
            build_iou_matrix(&gts, &props)?
        }
    };
    let assignment = strategy.assign(&scores)?;

    let positive_scores: Vec<f64> = assignment
        .labels
        .iter()
        .enumerate()
        .filter_map(|(j, l)| l.gt().map(|i| scores.score(i, j)))
        .collect();
    let mean_positive_score = (!positive_scores.is_empty())
        .then(|| positive_scores.iter().sum::<f64>() / positive_scores.len() as f64);

    let jittered: Vec<(usize, usize)> = scene
        .proposals
        .iter()
        .enumerate()
        .filter_map(|(j, p)| match p.provenance {
            Provenance::Jittered { gt } => Some((j, gt)),
            Provenance::Grid { .. } => None,
        })
        .collect();
    let recovery_rate = (!jittered.is_empty()).then(|| {
        let hits = jittered
            .iter()
            .filter(|(j, gt)| assignment.labels[*j] == Label::Positive(*gt))
            .count();
        hits as f64 / jittered.len() as f64
    });

    let report = ExperimentReport {
        strategy: *strategy,
        similarity: source.similarity(),
        num_gts: scores.rows(),
        num_proposals: scores.cols(),
        positives_per_gt: assignment.positives_per_gt.clone(),
        num_positive: assignment.num_positive(),
        num_negative: assignment.num_negative(),
        num_ignore: assignment.num_ignore(),
        mean_positive_score,
        recovery_rate,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(Experiment {
        report,
        scores,
        assignment,
    })
}
