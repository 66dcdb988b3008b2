use std::fs;
use std::io::Read;
use std::path::Path;

use gaussrep::assignment::{score, Strategy};
use gaussrep::geometry::{canonicalize_obb, gaussian_to_obb, obb_to_gaussian, rotated_iou};
use gaussrep::ingest::{parse_dota_dir, summarize_dataset};
use gaussrep::losses::{gradient_check, loss, LossKind};
use gaussrep::simulator::{
    convergence_case, default_step_size, gen_scene, optimize_pointset, run_assignment_experiment,
    translated_corners, OptimizationStatus, Scene, SceneConfig, ScoreSource,
};
use gaussrep::MetricKind;
use serde_json::{json, Value};

use crate::payload::{self, Payload, Representation};
use crate::{
    AssignArgs, Cli, CliError, Command, Format, GlobalArgs, OptimizeArgs, PairArgs, StrategyName,
    Target,
};

type Outcome = Result<u8, CliError>;

pub fn run(cli: &Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Convert { from, to, input } => convert(g, *from, *to, input.as_deref()),
        Command::Distance(pair) => distance(g, pair),
        Command::Loss(pair) => loss_cmd(g, pair),
        Command::Score(pair) => score_cmd(g, pair),
        Command::GradCheck { trials } => grad_check(g, *trials),
        Command::Assign(args) => assign(g, args),
        Command::Optimize(args) => optimize(g, args),
        Command::Ingest { dir } => ingest(g, dir),
    }
}

fn require_format(g: &GlobalArgs, allowed: &[Format], default: Format) -> Result<Format, CliError> {
    let f = g.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(CliError::usage(format!(
            "--format {} is not available for this command",
            format!("{f:?}").to_lowercase()
        )))
    }
}

/// Writes to `--output` if given, stdout otherwise.
fn emit(g: &GlobalArgs, text: &str) -> Result<(), CliError> {
    match &g.output {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

fn convert(g: &GlobalArgs, from: Representation, to: Target, input: Option<&str>) -> Outcome {
    require_format(g, &[Format::Json], Format::Json)?;
    let value = match input {
        Some(arg) => payload::load_arg(arg, "input")?,
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError::usage(format!("cannot read stdin: {e}")))?;
            payload::parse_json(&s, "input")?
        }
    };
    let parsed = payload::decode(&value, from, "input")?;
    let out = match (to, &parsed) {
        (Target::Obb, Payload::Obb(b)) => pretty(&canonicalize_obb(b)),
        (Target::Obb, _) => pretty(&gaussian_to_obb(&parsed.to_gaussian()?)),
        (Target::Gaussian, _) => pretty(&parsed.to_gaussian()?),
    };
    emit(g, &out)?;
    Ok(0)
}

fn load_pair(pair: &PairArgs) -> Result<(gaussrep::Gaussian2, gaussrep::Gaussian2), CliError> {
    Ok((
        payload::load_gaussian(&pair.gt, "gt")?,
        payload::load_gaussian(&pair.pred, "pred")?,
    ))
}

fn distance(g: &GlobalArgs, pair: &PairArgs) -> Outcome {
    require_format(g, &[Format::Json], Format::Json)?;
    let metric = g.metric.unwrap_or(MetricKind::Kld);
    let (gt, pred) = load_pair(pair)?;
    let d = metric.distance(&gt, &pred);
    emit(g, &pretty(&json!({ "metric": metric, "distance": d })))?;
    Ok(0)
}

fn loss_cmd(g: &GlobalArgs, pair: &PairArgs) -> Outcome {
    require_format(g, &[Format::Json], Format::Json)?;
    let kind = g.loss.unwrap_or(LossKind::Lkld);
    let (gt, pred) = load_pair(pair)?;
    let d = kind.metric().distance(&gt, &pred);
    let body = json!({ "loss": kind, "value": loss(kind, &gt, &pred), "distance": d });
    emit(g, &pretty(&body))?;
    Ok(0)
}

fn score_cmd(g: &GlobalArgs, pair: &PairArgs) -> Outcome {
    require_format(g, &[Format::Json], Format::Json)?;
    let metric = g.metric.unwrap_or(MetricKind::Kld);
    let (gt, pred) = load_pair(pair)?;
    let body = json!({
        "metric": metric,
        "score": score(metric, &gt, &pred),
        "distance": metric.distance(&gt, &pred),
    });
    emit(g, &pretty(&body))?;
    Ok(0)
}

fn grad_check(g: &GlobalArgs, trials: usize) -> Outcome {
    require_format(g, &[Format::Json], Format::Json)?;
    if trials == 0 {
        return Err(CliError::usage("--trials must be ≥ 1"));
    }
    let kinds = match g.loss {
        Some(k) => vec![k],
        None => LossKind::ALL.to_vec(),
    };
    let report = gradient_check(&kinds, trials, g.seed)?;
    emit(g, &pretty(&report))?;
    eprintln!(
        "max relative error {:.3e} (tolerance {:.0e}): {}",
        report.max_relative_error,
        report.tolerance,
        if report.pass { "pass" } else { "FAIL" }
    );
    Ok(if report.pass { 0 } else { 1 })
}

fn load_scene(g: &GlobalArgs, args: &AssignArgs) -> Result<Scene, CliError> {
    if let Some(path) = &args.scene {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        return serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: invalid scene: {e}", path.display())));
    }
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SceneConfig>(&text)
                .map_err(|e| CliError::usage(format!("{}: invalid config: {e}", path.display())))?
        }
        None => SceneConfig::default(),
    };
    if let Some(j) = args.jitter {
        config.jitter = j;
    }
    Ok(gen_scene(&config, g.seed)?)
}

fn assign(g: &GlobalArgs, args: &AssignArgs) -> Outcome {
    let format = require_format(g, &[Format::Json, Format::Csv, Format::Svg], Format::Json)?;
    let scene = load_scene(g, args)?;
    let fixed = Strategy::Fixed {
        pos_thr: args.pos_thr,
        neg_thr: args.neg_thr,
        force_match: args.force_match,
    };
    let metric = ScoreSource::Metric(g.metric.unwrap_or(MetricKind::Kld));
    let (strategy, source) = match args.strategy {
        StrategyName::Fixed => (fixed, metric),
        StrategyName::IouFixed => (fixed, ScoreSource::Iou),
        StrategyName::Atss => (Strategy::Atss { candidates_per_gt: args.candidates }, metric),
        StrategyName::Patss => (
            Strategy::Patss { candidates_per_gt: args.candidates, seed: g.seed },
            metric,
        ),
    };
    let exp = run_assignment_experiment(&scene, &strategy, source)?;
    eprintln!(
        "{} positives, {} negatives, {} ignored in {:.2} ms",
        exp.report.num_positive, exp.report.num_negative, exp.report.num_ignore, exp.report.runtime_ms
    );
    // Timing goes to stderr only so that outputs stay reproducible.
    let mut report = serde_json::to_value(&exp.report).expect("report serializes");
    if let Value::Object(map) = &mut report {
        map.remove("runtime_ms");
    }
    let report = pretty(&report);
    let csv = exp.assignment.to_csv(&exp.scores);
    match &g.output {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
            write_file(&dir.join("report.json"), &report)?;
            write_file(&dir.join("assignments.csv"), &csv)?;
            write_file(&dir.join("scene.json"), &pretty(&scene))?;
            write_file(&dir.join("scene.svg"), &scene.to_svg())?;
        }
        None => print!(
            "{}",
            match format {
                Format::Json => report,
                Format::Csv => csv,
                Format::Svg => scene.to_svg(),
            }
        ),
    }
    Ok(0)
}

fn optimize(g: &GlobalArgs, args: &OptimizeArgs) -> Outcome {
    let format = require_format(g, &[Format::Json, Format::Csv, Format::Svg], Format::Csv)?;
    let kind = g.loss.unwrap_or(LossKind::Lkld);
    let (gt, init) = match &args.gt {
        Some(arg) => {
            let v = payload::load_arg(arg, "gt")?;
            let gt = match payload::decode(&v, Representation::Obb, "gt")? {
                Payload::Obb(b) => b,
                _ => unreachable!("decoded as obb"),
            };
            let init = translated_corners(&gt, args.jitter, g.seed)?;
            (gt, init)
        }
        None => convergence_case(g.seed, args.jitter)?,
    };
    obb_to_gaussian(&gt)?;
    let step_size = args.step_size.unwrap_or_else(|| default_step_size(kind));
    let trace = optimize_pointset(&gt, &init, kind, step_size, args.steps)?;
    let iou = rotated_iou(&gt, &trace.terminal);
    let summary = pretty(&json!({
        "loss": kind,
        "step_size": step_size,
        "steps": args.steps,
        "gt": gt,
        "status": trace.status,
        "initial_distance": trace.initial_distance(),
        "final_distance": trace.final_distance(),
        "converged": trace.converged(),
        "converged_at": trace.converged_at(),
        "terminal": trace.terminal,
        "terminal_iou": iou,
    }));
    let csv = trace.to_csv();
    let svg = trace.to_svg(&gt);
    match &g.output {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
            write_file(&dir.join("trace.csv"), &csv)?;
            write_file(&dir.join("overlay.svg"), &svg)?;
            write_file(&dir.join("summary.json"), &summary)?;
        }
        None => print!(
            "{}",
            match format {
                Format::Json => summary,
                Format::Csv => csv,
                Format::Svg => svg,
            }
        ),
    }
    match &trace.status {
        OptimizationStatus::Diverged { step, reason } => {
            eprintln!("diverged at step {step}: {reason}");
            Ok(4)
        }
        OptimizationStatus::Completed if trace.converged() => {
            eprintln!(
                "converged at step {}: distance {:.3e} -> {:.3e}, terminal IoU {iou:.4}",
                trace.converged_at().unwrap_or(0),
                trace.initial_distance(),
                trace.final_distance()
            );
            Ok(0)
        }
        OptimizationStatus::Completed => {
            eprintln!(
                "not converged: distance {:.3e} -> {:.3e}",
                trace.initial_distance(),
                trace.final_distance()
            );
            Ok(1)
        }
    }
}

fn ingest(g: &GlobalArgs, dir: &Path) -> Outcome {
    let format = require_format(g, &[Format::Json, Format::Csv], Format::Json)?;
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", dir.display())));
    }
    let (files, unreadable) = parse_dota_dir(dir)?;
    let summary = summarize_dataset(&files);
    let errors: Vec<Value> = files
        .iter()
        .flat_map(|f| &f.errors)
        .map(|e| json!({ "origin": e.origin, "error": e.kind, "message": e.to_string() }))
        .collect();
    for e in files.iter().flat_map(|f| &f.errors) {
        eprintln!("parse error: {e}");
    }
    for w in files.iter().flat_map(|f| &f.warnings) {
        eprintln!("warning: {}: {}", w.origin, w.message);
    }
    let unreadable: Vec<String> = unreadable.iter().map(ToString::to_string).collect();
    for u in &unreadable {
        eprintln!("unreadable: {u}");
    }
    let out = match format {
        Format::Csv => summary.to_csv(),
        _ => pretty(&json!({ "summary": summary, "errors": errors, "unreadable": unreadable })),
    };
    emit(g, &out)?;
    if files.iter().any(|f| !f.records.is_empty()) {
        Ok(0)
    } else {
        Err(CliError::empty(format!("no parseable annotation files in {}", dir.display())))
    }
}
