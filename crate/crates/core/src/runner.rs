//! Batch pipelines behind the command-line front end.
//!
//! Every run writes its artifacts into the configured output directory:
//! `design.csv` / `design.json`, `report.json` (which echoes the resolved
//! configuration), `dprofile.csv`, and for exact tasks `restarts.csv` and one
//! `trace_<restart>.csv` per restart. Presets write one sub-directory per
//! pipeline plus `comparison.csv`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::approx::{d_efficiency_bound, derivative_profile, solve_maximin, solve_single, MaximinProblem, SolveReport};
use crate::config::{AppId, ConfigError, CriterionSection, ModelSection, RunConfig, SpaceSection, Task};
use crate::criterion::Criterion;
use crate::design::ApproximateDesign;
use crate::error::DesignError;
use crate::exact::{search, AnnealConfig, Objective, SearchOutcome};
use crate::io::{self, DesignFile, IoError};
use crate::model::ModelSpec;
use crate::space::DesignSpace;

/// Failure of a run, carrying its process exit code.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    /// Malformed or incomplete configuration or input file.
    #[error("{0}")]
    Schema(String),
    /// A solver could not produce a result (singular or infeasible problem).
    #[error("{0}")]
    Solver(String),
    /// Unknown model preset or parameters that do not fit it.
    #[error("{0}")]
    Model(String),
    /// The pipeline needs parameters that must be supplied by the user.
    #[error("{0}")]
    ExternalParameters(String),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    pub fn code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Model(_) => 4,
            RunError::ExternalParameters(_) => 5,
            RunError::Io(_) => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Schema(_) => "schema",
            RunError::Solver(_) => "solver",
            RunError::Model(_) => "model",
            RunError::ExternalParameters(_) => "external_parameters_required",
            RunError::Io(_) => "io",
        }
    }

    /// Machine-readable error report.
    pub fn to_json(&self) -> Value {
        json!({ "error": self.kind(), "code": self.code(), "message": self.to_string() })
    }
}

impl From<DesignError> for RunError {
    fn from(e: DesignError) -> Self {
        let msg = e.to_string();
        match e {
            DesignError::UnknownPreset(_)
            | DesignError::ParameterCount { .. }
            | DesignError::InvalidParameters(_)
            | DesignError::DegenerateProbability { .. } => RunError::Model(msg),
            DesignError::SingularInformation
            | DesignError::Infeasible(_)
            | DesignError::RoundingPrecondition(_)
            | DesignError::AnnealFailed(_) => RunError::Solver(msg),
            DesignError::DimensionMismatch { .. }
            | DesignError::InvalidDesign(_)
            | DesignError::InvalidSpace(_)
            | DesignError::InvalidCriterion(_)
            | DesignError::InvalidOptions(_) => RunError::Schema(msg),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Schema(e.to_string())
    }
}

impl From<IoError> for RunError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } => RunError::Io(e.to_string()),
            IoError::Format(m) => RunError::Schema(m),
            IoError::Design(d) => d.into(),
        }
    }
}

type RunResult<T> = Result<T, RunError>;

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub report: Value,
}

/// Parses a TOML config file.
pub fn load_config(path: &Path) -> RunResult<RunConfig> {
    let text = io::read_text(path)?;
    Ok(RunConfig::from_toml(&text)?)
}

/// Runs the task described by `config`.
pub fn run(config: &RunConfig) -> RunResult<RunSummary> {
    config.validate()?;
    let cfg = config.resolved();
    let out = cfg.out_dir();
    make_dir(&out)?;
    let start = Instant::now();
    let mut report = match cfg.task() {
        Task::Approx => run_approx(&cfg, &out)?,
        Task::Exact => run_exact(&cfg, &out)?,
        Task::MaximinApprox | Task::MaximinExact => run_maximin(&cfg, &out)?,
        Task::Verify => run_verify(&cfg, &out)?,
        Task::Preset => run_preset_resolved(cfg.app.expect("validated"), &cfg, &out)?,
    };
    report["task"] = json!(cfg.task_name());
    report["seed"] = json!(cfg.seed());
    report["config"] = serde_json::to_value(&cfg).expect("configs serialize");
    report["timings"]["total_seconds"] = json!(start.elapsed().as_secs_f64());
    write_json(&out.join("report.json"), &report)?;
    Ok(RunSummary { out, report })
}

/// Runs a published application with optional overrides taken from `config`
/// (seed, output directory, run counts, solver sections, and for `app4` the
/// `[[objectives]]` models).
pub fn run_preset(app: AppId, config: Option<&RunConfig>) -> RunResult<RunSummary> {
    let mut cfg = config.cloned().unwrap_or_else(|| RunConfig::new(Task::Preset));
    cfg.task = Some(Task::Preset);
    cfg.app = Some(app);
    run(&cfg)
}

/// Writes the error report to `<out>/error.json` when the directory is usable.
pub fn write_error_report(out: &Path, err: &RunError) {
    if fs::create_dir_all(out).is_ok() {
        let _ = write_json(&out.join("error.json"), &err.to_json());
    }
}

fn make_dir(dir: &Path) -> RunResult<()> {
    fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> RunResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    Ok(io::write_text(path, &s)?)
}

fn build_model(m: &ModelSection) -> RunResult<ModelSpec> {
    Ok(m.build()?)
}

fn build_space(s: &SpaceSection) -> RunResult<(DesignSpace, Vec<Vec<f64>>)> {
    let space = s.build()?;
    let cands = space.enumerate_grid()?;
    Ok((space, cands))
}

fn build_criterion(c: &CriterionSection, model: &ModelSpec) -> RunResult<Criterion> {
    Ok(c.build(model.q())?)
}

fn check_dims(model: &ModelSpec, space: &DesignSpace) -> RunResult<()> {
    if model.p() != space.dim() {
        return Err(RunError::Schema(format!(
            "model `{}` takes {}-dimensional points but the space is {}-dimensional",
            model.preset().as_str(),
            model.p(),
            space.dim()
        )));
    }
    Ok(())
}

fn anneal_config(cfg: &RunConfig) -> AnnealConfig {
    cfg.anneal.clone().unwrap_or_default()
}

fn solve_report_json(r: &SolveReport) -> Value {
    let mut v = serde_json::to_value(r).expect("reports serialize");
    if let Some(m) = v.as_object_mut() {
        m.remove("history");
    }
    v["verdict"] = json!(verdict(r.verified));
    v
}

fn verdict(optimal: bool) -> &'static str {
    if optimal {
        "optimal"
    } else {
        "not optimal"
    }
}

fn history_csv(history: &[f64]) -> String {
    let mut s = String::from("iteration,loss\n");
    for (i, v) in history.iter().enumerate() {
        s.push_str(&format!("{i},{v:e}\n"));
    }
    s
}

/// Approximate design for one criterion; writes `<stem>.csv/json`,
/// `dprofile.csv` and `history.csv` into `dir`.
fn approx_stage(
    dir: &Path,
    stem: &str,
    model: &ModelSpec,
    criterion: &Criterion,
    cands: &[Vec<f64>],
    cfg: &RunConfig,
) -> RunResult<(ApproximateDesign, SolveReport, Value)> {
    let t = Instant::now();
    let (design, rep) = solve_single(model, criterion, cands, &cfg.approx)?;
    let seconds = t.elapsed().as_secs_f64();
    let profile = derivative_profile(model, criterion, &design, cands)?;
    io::write_design(dir, stem, &DesignFile::from(&design))?;
    io::write_text(&dir.join("dprofile.csv"), &io::dprofile_csv(cands, &profile))?;
    io::write_text(&dir.join("history.csv"), &history_csv(&rep.history))?;
    let mut v = solve_report_json(&rep);
    v["seconds"] = json!(seconds);
    v["design"] = json!(DesignFile::from(&design));
    if *criterion == Criterion::D {
        v["d_efficiency_lower_bound"] = json!(d_efficiency_bound(model.q(), rep.max_derivative));
    }
    Ok((design, rep, v))
}

/// Annealing search started from `reference`; writes the exact design as
/// `design.csv/json` plus `restarts.csv` and the traces.
fn exact_stage(
    dir: &Path,
    objective: &Objective,
    reference: &ApproximateDesign,
    n: u32,
    space: &DesignSpace,
    anneal: &AnnealConfig,
) -> RunResult<(SearchOutcome, Value)> {
    let t = Instant::now();
    let outcome = search(objective, reference, n, space, anneal)?;
    let seconds = t.elapsed().as_secs_f64();
    io::write_design(dir, "design", &DesignFile::from(&outcome.best))?;
    io::write_text(&dir.join("restarts.csv"), &io::restarts_csv(&outcome.reports))?;
    for (j, trace) in outcome.traces.iter().enumerate() {
        io::write_text(&dir.join(format!("trace_{j}.csv")), &io::trace_csv(trace))?;
    }
    let initial_loss = objective.loss(&outcome.initial);
    let v = json!({
        "n": n,
        "loss": outcome.best_loss,
        "modified_efficiency": outcome.best_efficiency,
        "reference_loss": outcome.reference_loss,
        "best_restart": outcome.best_restart,
        "support_size": outcome.best.len(),
        "initial_loss": initial_loss,
        "initial_efficiency": objective.score(initial_loss, outcome.reference_loss),
        "anneal": outcome.config,
        "restarts": outcome.reports,
        "design": DesignFile::from(&outcome.best),
        "seconds": seconds,
    });
    Ok((outcome, v))
}

fn run_approx(cfg: &RunConfig, out: &Path) -> RunResult<Value> {
    let model = build_model(cfg.model.as_ref().expect("validated"))?;
    let (space, cands) = build_space(cfg.space.as_ref().expect("validated"))?;
    check_dims(&model, &space)?;
    let criterion = build_criterion(cfg.criterion.as_ref().expect("validated"), &model)?;
    let (_, rep, v) = approx_stage(out, "design", &model, &criterion, &cands, cfg)?;
    Ok(json!({ "approx": v, "timings": { "approx_seconds": v["seconds"] }, "verdict": verdict(rep.verified) }))
}

fn run_exact(cfg: &RunConfig, out: &Path) -> RunResult<Value> {
    let model = build_model(cfg.model.as_ref().expect("validated"))?;
    let (space, cands) = build_space(cfg.space.as_ref().expect("validated"))?;
    check_dims(&model, &space)?;
    let criterion = build_criterion(cfg.criterion.as_ref().expect("validated"), &model)?;
    let (oad, _, av) = approx_stage(out, "approx_design", &model, &criterion, &cands, cfg)?;
    let objective = Objective::single(model, criterion)?;
    let (_, ev) = exact_stage(out, &objective, &oad, cfg.n.expect("validated"), &space, &anneal_config(cfg))?;
    Ok(json!({
        "approx": av,
        "exact": ev,
        "timings": { "approx_seconds": av["seconds"], "exact_seconds": ev["seconds"] },
    }))
}

/// Builds a maximin problem, solving for any missing reference losses.
fn maximin_problem(
    objectives: &[(ModelSpec, Criterion, Option<f64>)],
    cands: &[Vec<f64>],
    cfg: &RunConfig,
) -> RunResult<(MaximinProblem, Vec<Value>)> {
    let mut pairs = Vec::new();
    let mut refs = Vec::new();
    let mut info = Vec::new();
    for (i, (model, criterion, given)) in objectives.iter().enumerate() {
        let (reference, source) = match given {
            Some(r) => (*r, "given"),
            None => {
                let (_, rep) = solve_single(model, criterion, cands, &cfg.approx)
                    .map_err(|e| RunError::from(e).with_context(&format!("objective {i}")))?;
                (rep.loss, "solved")
            }
        };
        info.push(json!({
            "model": model.preset().as_str(),
            "criterion": criterion.name(),
            "reference_loss": reference,
            "reference_source": source,
        }));
        pairs.push((model.clone(), criterion.clone()));
        refs.push(reference);
    }
    Ok((MaximinProblem::new(pairs, refs)?, info))
}

impl RunError {
    fn with_context(self, ctx: &str) -> Self {
        match self {
            RunError::Schema(m) => RunError::Schema(format!("{ctx}: {m}")),
            RunError::Solver(m) => RunError::Solver(format!("{ctx}: {m}")),
            RunError::Model(m) => RunError::Model(format!("{ctx}: {m}")),
            RunError::ExternalParameters(m) => RunError::ExternalParameters(format!("{ctx}: {m}")),
            RunError::Io(m) => RunError::Io(format!("{ctx}: {m}")),
        }
    }
}

fn objectives_from_config(cfg: &RunConfig) -> RunResult<Vec<(ModelSpec, Criterion, Option<f64>)>> {
    cfg.objectives
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let model = build_model(&o.model).map_err(|e| e.with_context(&format!("objective {i}")))?;
            let crit = build_criterion(o.criterion.as_ref().expect("validated"), &model)
                .map_err(|e| e.with_context(&format!("objective {i}")))?;
            Ok((model, crit, o.reference_loss))
        })
        .collect()
}

/// Maximin approximate design on `cands`, optionally followed by exact
/// searches for each run count in `ns`.
fn maximin_pipeline(
    dir: &Path,
    objectives: &[(ModelSpec, Criterion, Option<f64>)],
    space: &DesignSpace,
    cands: &[Vec<f64>],
    ns: &[u32],
    nested: bool,
    cfg: &RunConfig,
) -> RunResult<Value> {
    make_dir(dir)?;
    for (model, _, _) in objectives {
        check_dims(model, space)?;
    }
    let (problem, info) = maximin_problem(objectives, cands, cfg)?;
    let t = Instant::now();
    let (oad, rep) = solve_maximin(&problem, cands, &cfg.approx)?;
    let seconds = t.elapsed().as_secs_f64();
    let stem = if ns.is_empty() { "design" } else { "approx_design" };
    io::write_design(dir, stem, &DesignFile::from(&oad))?;
    io::write_text(&dir.join("history.csv"), &history_csv(&rep.history))?;
    let uniform = ApproximateDesign::uniform(cands.to_vec())?;
    let uniform_effs = problem.efficiencies(&uniform)?;
    let mut av = solve_report_json(&rep);
    av["seconds"] = json!(seconds);
    av["design"] = json!(DesignFile::from(&oad));
    av["uniform_efficiencies"] = json!(uniform_effs);
    let objective = Objective::maximin(problem.clone())?;
    let mut exact = Vec::new();
    for &n in ns {
        let sub = if nested { dir.join(format!("n{n}")) } else { dir.to_path_buf() };
        make_dir(&sub)?;
        let (outcome, mut ev) = exact_stage(&sub, &objective, &oad, n, space, &anneal_config(cfg))?;
        let effs = problem.efficiencies(&outcome.best.to_approximate())?;
        ev["efficiencies"] = json!(effs);
        ev["min_efficiency"] = json!(effs.iter().copied().fold(f64::INFINITY, f64::min));
        exact.push(ev);
    }
    Ok(json!({ "objectives": info, "approx": av, "exact": exact }))
}

fn run_maximin(cfg: &RunConfig, out: &Path) -> RunResult<Value> {
    let (space, cands) = build_space(cfg.space.as_ref().expect("validated"))?;
    let objectives = objectives_from_config(cfg)?;
    let ns: Vec<u32> = match cfg.task() {
        Task::MaximinExact => vec![cfg.n.expect("validated")],
        _ => Vec::new(),
    };
    let mut v = maximin_pipeline(out, &objectives, &space, &cands, &ns, false, cfg)?;
    if let Some(e) = v["exact"].as_array().and_then(|a| a.first()).cloned() {
        v["exact"] = e;
    } else if let Some(m) = v.as_object_mut() {
        m.remove("exact");
    }
    Ok(v)
}

fn run_verify(cfg: &RunConfig, out: &Path) -> RunResult<Value> {
    let model = build_model(cfg.model.as_ref().expect("validated"))?;
    let (space, cands) = build_space(cfg.space.as_ref().expect("validated"))?;
    check_dims(&model, &space)?;
    let criterion = build_criterion(cfg.criterion.as_ref().expect("validated"), &model)?;
    let section = cfg.verify.as_ref().expect("validated");
    let file = match &section.design {
        Some(path) => io::read_design(path)?,
        None => DesignFile::Approximate {
            points: section.points.clone().expect("validated"),
            weights: section.weights.clone().expect("validated"),
        },
    };
    let design = file.to_approximate()?;
    for x in design.points() {
        if !space.contains(x)? {
            return Err(RunError::Schema(format!("design point {x:?} lies outside the design space")));
        }
    }
    let loss = criterion.design_loss(&model, &design)?;
    let uniform = ApproximateDesign::uniform(cands.clone())?;
    let uniform_loss = criterion
        .design_loss(&model, &uniform)
        .map_err(|_| RunError::Solver("the uniform design on the candidates is singular".into()))?;
    let eps = cfg.approx.resolve_tolerance(&criterion, model.q(), uniform_loss);
    let profile = derivative_profile(&model, &criterion, &design, &cands)?;
    let (j, max_d) = profile
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, d)| if d > b.1 { (i, d) } else { b });
    let at_support = derivative_profile(&model, &criterion, &design, design.points())?;
    let support_residual = at_support.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    io::write_text(&out.join("dprofile.csv"), &io::dprofile_csv(&cands, &profile))?;
    let mut v = json!({
        "verify": {
            "loss": loss,
            "max_derivative": max_d,
            "argmax": cands[j],
            "support_residual": support_residual,
            "eq_tolerance": eps,
            "verdict": verdict(max_d <= eps),
            "design": file,
        }
    });
    if criterion == Criterion::D {
        v["verify"]["d_efficiency_lower_bound"] = json!(d_efficiency_bound(model.q(), max_d));
    }
    v["verdict"] = v["verify"]["verdict"].clone();
    Ok(v)
}

/// One line of a preset's comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub obtained: f64,
    pub reported: Option<f64>,
}

impl Comparison {
    fn new(quantity: impl Into<String>, obtained: f64, reported: Option<f64>) -> Self {
        Comparison {
            quantity: quantity.into(),
            obtained,
            reported,
        }
    }
}

fn comparison_csv(rows: &[Comparison]) -> String {
    let mut s = String::from("quantity,obtained,reported\n");
    for r in rows {
        let rep = r.reported.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{}\n", r.quantity, io::sig6(r.obtained), rep));
    }
    s
}

const APP1_CASE_I_THETA: [f64; 4] = [-3.0, 4.0, 6.0, 1.0];
const APP1_CASE_II_THETA: [f64; 4] = [-2.2054, 13.5803, 2.2547, 1.6262];
const APP2_THETA: [f64; 3] = [0.07, 0.93, 0.96];
const APP3_THETA: [f64; 8] = [-0.4926, -0.6280, -0.3283, 0.4378, 0.5283, -0.6120, -0.6837, -0.2061];

fn run_preset_resolved(app: AppId, cfg: &RunConfig, out: &Path) -> RunResult<Value> {
    let t = Instant::now();
    let (rows, details) = match app {
        AppId::App1CaseI => preset_app1_case_i(cfg, out)?,
        AppId::App1CaseIi => preset_app1_case_ii(cfg, out)?,
        AppId::App2 => preset_app2(cfg, out)?,
        AppId::App3 => preset_app3(cfg, out)?,
        AppId::App4 => preset_app4(cfg, out)?,
    };
    io::write_text(&out.join("comparison.csv"), &comparison_csv(&rows))?;
    Ok(json!({
        "app": app.as_str(),
        "comparison": rows,
        "pipelines": details,
        "timings": { "preset_seconds": t.elapsed().as_secs_f64() },
    }))
}

fn n_list(cfg: &RunConfig, default: &[u32]) -> Vec<u32> {
    if let Some(n) = cfg.n {
        return vec![n];
    }
    cfg.n_values.clone().unwrap_or_else(|| default.to_vec())
}

/// Single-criterion pipeline used by the presets: OAD into `<dir>/approx`,
/// one exact search per run count into `<dir>/n<count>`.
fn single_pipeline(
    dir: &Path,
    model: &ModelSpec,
    criterion: &Criterion,
    space: &DesignSpace,
    ns: &[u32],
    cfg: &RunConfig,
) -> RunResult<(ApproximateDesign, SolveReport, Vec<SearchOutcome>, Value)> {
    let cands = space.enumerate_grid()?;
    let adir = dir.join("approx");
    make_dir(&adir)?;
    let (oad, rep, av) = approx_stage(&adir, "design", model, criterion, &cands, cfg)?;
    let objective = Objective::single(model.clone(), criterion.clone())?;
    let mut outcomes = Vec::new();
    let mut exact = Vec::new();
    for &n in ns {
        let sub = dir.join(format!("n{n}"));
        make_dir(&sub)?;
        let (o, ev) = exact_stage(&sub, &objective, &oad, n, space, &anneal_config(cfg))?;
        outcomes.push(o);
        exact.push(ev);
    }
    Ok((oad, rep, outcomes, json!({ "approx": av, "exact": exact })))
}

fn preset_model(preset: &str, theta: &[f64]) -> RunResult<ModelSpec> {
    build_model(&ModelSection {
        preset: preset.into(),
        theta: theta.to_vec(),
    })
}

fn square_grid(upper: f64, k: usize) -> RunResult<DesignSpace> {
    Ok(DesignSpace::new_grid(vec![0.0; 2], vec![upper; 2], vec![k; 2])?)
}

fn preset_app1_case_i(cfg: &RunConfig, out: &Path) -> RunResult<(Vec<Comparison>, Value)> {
    let model = preset_model("logit2_interaction", &APP1_CASE_I_THETA)?;
    let space = square_grid(1.0, 51)?;
    let ns = n_list(cfg, &[10, 15, 20]);
    let (oad, _, outcomes, details) = single_pipeline(out, &model, &Criterion::D, &space, &ns, cfg)?;
    let mut rows = vec![Comparison::new(
        "approx: support points with weight > 0.01",
        oad.weights().iter().filter(|&&w| w > 0.01).count() as f64,
        Some(5.0),
    )];
    let minor: Vec<f64> = oad.weights().iter().copied().filter(|&w| w <= 0.01).collect();
    rows.push(Comparison::new("approx: points with weight <= 0.01", minor.len() as f64, Some(1.0)));
    if let Some(w) = minor.iter().copied().reduce(f64::max) {
        rows.push(Comparison::new("approx: largest minor weight", w, Some(0.0033)));
    }
    for (n, o) in ns.iter().zip(&outcomes) {
        let reported = match n {
            10 => Some(0.9836),
            15 => Some(0.9785),
            20 => Some(1.0001),
            _ => None,
        };
        rows.push(Comparison::new(format!("n={n}: modified efficiency"), o.best_efficiency, reported));
    }
    Ok((rows, details))
}

fn preset_app1_case_ii(cfg: &RunConfig, out: &Path) -> RunResult<(Vec<Comparison>, Value)> {
    const GRIDS: [(usize, f64, f64); 5] = [
        (21, 0.9716, 0.9822),
        (31, 0.9901, 0.9513),
        (41, 0.9961, 0.9793),
        (51, 0.9985, 0.9794),
        (81, 0.9984, 0.9822),
    ];
    let model = preset_model("logit2_interaction", &APP1_CASE_II_THETA)?;
    let ns = n_list(cfg, &[10]);
    let mut results = Vec::new();
    let mut details = Vec::new();
    for (k, _, _) in GRIDS {
        let space = square_grid(2.0, k)?;
        let (_, rep, outcomes, d) = single_pipeline(&out.join(format!("grid{k}")), &model, &Criterion::D, &space, &ns, cfg)?;
        results.push((k, rep.loss, outcomes));
        details.push(json!({ "levels": k, "pipeline": d }));
    }
    // The reported efficiencies use an external optimum that is not printed;
    // the finest grid serves as reference instead.
    let finest = results.last().expect("non-empty").1;
    let mut rows = Vec::new();
    for ((k, loss, outcomes), (_, eff_n, eff_exact)) in results.iter().zip(GRIDS) {
        rows.push(Comparison::new(format!("N={k}^2: approx loss"), *loss, None));
        rows.push(Comparison::new(format!("N={k}^2: efficiency vs N=81^2"), finest / loss, Some(eff_n)));
        for (n, o) in ns.iter().zip(outcomes) {
            let reported = (*n == 10).then_some(eff_exact);
            rows.push(Comparison::new(
                format!("N={k}^2 n={n}: efficiency vs N=81^2"),
                finest / o.best_loss,
                reported,
            ));
        }
    }
    Ok((rows, json!(details)))
}

fn preset_app2(cfg: &RunConfig, out: &Path) -> RunResult<(Vec<Comparison>, Value)> {
    let model = preset_model("group_testing", &APP2_THETA)?;
    let space = DesignSpace::integer_range(1, 61)?;
    let ns = n_list(cfg, &[10, 11, 12, 13, 14]);
    let cases = [
        (
            "D",
            Criterion::D,
            0.1448,
            [(10, 0.1462, 0.9906), (11, 0.1461, 0.9912), (12, 0.1448, 1.0), (13, 0.1457, 0.9944), (14, 0.1456, 0.9946)],
        ),
        (
            "c",
            Criterion::c_optimality(vec![1.0, 0.0, 0.0])?,
            0.0354,
            [(10, 0.0361, 0.9799), (11, 0.0361, 0.9808), (12, 0.0358, 0.9891), (13, 0.0355, 0.9968), (14, 0.0355, 0.9970)],
        ),
    ];
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for (label, criterion, approx_loss, table) in cases {
        let (_, rep, outcomes, d) = single_pipeline(&out.join(label), &model, &criterion, &space, &ns, cfg)?;
        rows.push(Comparison::new(format!("{label} approx: loss"), rep.loss, Some(approx_loss)));
        for (n, o) in ns.iter().zip(&outcomes) {
            let reported = table.iter().find(|(m, _, _)| m == n);
            rows.push(Comparison::new(format!("{label} n={n}: loss"), o.best_loss, reported.map(|r| r.1)));
            rows.push(Comparison::new(
                format!("{label} n={n}: modified efficiency"),
                o.best_efficiency,
                reported.map(|r| r.2),
            ));
        }
        details.push(json!({ "criterion": label, "pipeline": d }));
    }
    Ok((rows, json!(details)))
}

fn preset_app3(cfg: &RunConfig, out: &Path) -> RunResult<(Vec<Comparison>, Value)> {
    let model = preset_model("logit7", &APP3_THETA)?;
    let space = DesignSpace::new_grid(vec![-1.0; 7], vec![1.0; 7], vec![4; 7])?;
    let ns = n_list(cfg, &[30]);
    let (_, rep, outcomes, details) = single_pipeline(out, &model, &Criterion::D, &space, &ns, cfg)?;
    let mut rows = vec![
        Comparison::new("approx: loss", rep.loss, Some(4.9485)),
        Comparison::new("approx: support size", rep.support_size as f64, Some(29.0)),
    ];
    for (n, o) in ns.iter().zip(&outcomes) {
        rows.push(Comparison::new(
            format!("n={n}: modified efficiency"),
            o.best_efficiency,
            (*n == 30).then_some(0.9659),
        ));
        rows.push(Comparison::new(
            format!("n={n}: support size"),
            o.best.len() as f64,
            (*n == 30).then_some(22.0),
        ));
    }
    Ok((rows, details))
}

fn preset_app4(cfg: &RunConfig, out: &Path) -> RunResult<(Vec<Comparison>, Value)> {
    if cfg.objectives.is_empty() {
        return Err(RunError::ExternalParameters(
            "app4 needs the parameter vectors of its four dose-response models; list them as \
             [[objectives]] entries (dose_linear, dose_emax, dose_emax, dose_logistic) in a config file"
                .into(),
        ));
    }
    let models = cfg
        .objectives
        .iter()
        .enumerate()
        .map(|(i, o)| build_model(&o.model).map_err(|e| e.with_context(&format!("objective {i}"))))
        .collect::<RunResult<Vec<_>>>()?;
    let space = DesignSpace::new_grid(vec![0.0], vec![500.0], vec![201])?;
    let cands = space.enumerate_grid()?;
    let ns = n_list(cfg, &[10, 20, 30]);
    let cases = [
        ("A", 0.7155, [(10, 0.6813), (20, 0.6983), (30, 0.7121)]),
        ("D", 0.8538, [(10, 0.8371), (20, 0.8420), (30, 0.8459)]),
    ];
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for (label, approx_reported, table) in cases {
        let objectives: Vec<(ModelSpec, Criterion, Option<f64>)> = models
            .iter()
            .map(|m| {
                let c = if label == "A" { Criterion::a_optimality(m.q()) } else { Criterion::D };
                (m.clone(), c, None)
            })
            .collect();
        let d = maximin_pipeline(&out.join(label), &objectives, &space, &cands, &ns, true, cfg)?;
        rows.push(Comparison::new(
            format!("{label} approx: min efficiency"),
            d["approx"]["min_efficiency"].as_f64().unwrap_or(f64::NAN),
            Some(approx_reported),
        ));
        rows.push(Comparison::new(
            format!("{label} approx: support size"),
            d["approx"]["support_size"].as_f64().unwrap_or(f64::NAN),
            (label == "D").then_some(5.0),
        ));
        let exact = d["exact"].as_array().cloned().unwrap_or_default();
        for (n, e) in ns.iter().zip(&exact) {
            rows.push(Comparison::new(
                format!("{label} n={n}: min efficiency"),
                e["min_efficiency"].as_f64().unwrap_or(f64::NAN),
                table.iter().find(|(m, _)| m == n).map(|r| r.1),
            ));
        }
        details.push(json!({ "criterion": label, "pipeline": d }));
    }
    Ok((rows, json!(details)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes_are_distinct() {
        let errs = [
            RunError::Schema(String::new()),
            RunError::Solver(String::new()),
            RunError::Model(String::new()),
            RunError::ExternalParameters(String::new()),
            RunError::Io(String::new()),
        ];
        let mut codes: Vec<i32> = errs.iter().map(RunError::code).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn design_errors_map_to_codes() {
        assert_eq!(RunError::from(DesignError::UnknownPreset("x".into())).code(), 4);
        assert_eq!(RunError::from(DesignError::SingularInformation).code(), 3);
        assert_eq!(RunError::from(DesignError::InvalidSpace("x".into())).code(), 2);
    }

    #[test]
    fn app4_without_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(Task::Preset);
        cfg.out = Some(dir.path().to_path_buf());
        let err = run_preset(AppId::App4, Some(&cfg)).unwrap_err();
        assert_eq!(err.code(), 5);
    }
}
