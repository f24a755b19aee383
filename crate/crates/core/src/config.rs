//! TOML run configuration.
//!
//! ```toml
//! task = "exact"          # approx | exact | maximin_approx | maximin_exact | verify | preset
//! seed = 42               # optional, defaults to 42
//! n = 12                  # exact tasks
//! out = "out"             # output directory
//!
//! [model]
//! preset = "group_testing"
//! theta = [0.07, 0.93, 0.96]
//!
//! [space]
//! kind = "integers"       # grid | finite | integers
//! start = 1
//! end = 61
//!
//! [criterion]
//! kind = "D"              # D | A | c | trace
//!
//! [approx]                # optional solver overrides
//! [anneal]
//! restarts = 10
//! ```
//!
//! Maximin tasks list `[[objectives]]` tables, each with its own `model`
//! and `criterion` sub-tables and an optional `reference_loss`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::approx::ApproxSolveOptions;
use crate::criterion::Criterion;
use crate::error::{DesignError, Result};
use crate::exact::AnnealConfig;
use crate::model::{make_preset, ModelSpec};
use crate::space::DesignSpace;

/// Malformed or incomplete configuration.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

impl From<DesignError> for ConfigError {
    fn from(e: DesignError) -> Self {
        ConfigError(e.to_string())
    }
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "out";
/// Trace stride used by presets unless an `[anneal]` section is given.
pub const PRESET_TRACE_STRIDE: usize = 100;

fn default_anneal(task: Option<Task>) -> AnnealConfig {
    match task {
        Some(Task::Preset) => AnnealConfig {
            trace_stride: PRESET_TRACE_STRIDE,
            ..AnnealConfig::default()
        },
        _ => AnnealConfig::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Approx,
    Exact,
    MaximinApprox,
    MaximinExact,
    Verify,
    Preset,
}

/// Built-in reproductions of published applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppId {
    App1CaseI,
    App1CaseIi,
    App2,
    App3,
    App4,
}

impl AppId {
    pub fn as_str(self) -> &'static str {
        match self {
            AppId::App1CaseI => "app1_case_i",
            AppId::App1CaseIi => "app1_case_ii",
            AppId::App2 => "app2",
            AppId::App3 => "app3",
            AppId::App4 => "app4",
        }
    }
}

impl std::str::FromStr for AppId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "app1_case_i" => Ok(AppId::App1CaseI),
            "app1_case_ii" => Ok(AppId::App1CaseIi),
            "app2" => Ok(AppId::App2),
            "app3" => Ok(AppId::App3),
            "app4" => Ok(AppId::App4),
            other => Err(format!(
                "unknown application `{other}` (expected app1_case_i, app1_case_ii, app2, app3 or app4)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    pub theta: Vec<f64>,
}

impl ModelSection {
    pub fn build(&self) -> Result<ModelSpec> {
        make_preset(&self.preset, self.theta.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSection {
    /// Tensor grid of `levels[i]` equally spaced values on `[lower[i], upper[i]]`.
    Grid { lower: Vec<f64>, upper: Vec<f64>, levels: Vec<usize> },
    Finite { points: Vec<Vec<f64>> },
    /// The integers `start..=end`.
    Integers { start: i64, end: i64 },
}

impl SpaceSection {
    pub fn build(&self) -> Result<DesignSpace> {
        match self {
            SpaceSection::Grid { lower, upper, levels } => {
                DesignSpace::new_grid(lower.clone(), upper.clone(), levels.clone())
            }
            SpaceSection::Finite { points } => DesignSpace::new_finite(points.clone()),
            SpaceSection::Integers { start, end } => DesignSpace::integer_range(*start, *end),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum CriterionSection {
    D,
    A,
    #[serde(rename = "c")]
    C { c: Vec<f64> },
    /// `tr(C' M^-1 C)` with `C` given as a list of `q` rows.
    #[serde(rename = "trace")]
    Trace { matrix: Vec<Vec<f64>> },
}

impl CriterionSection {
    pub fn build(&self, q: usize) -> Result<Criterion> {
        let criterion = match self {
            CriterionSection::D => Criterion::D,
            CriterionSection::A => Criterion::a_optimality(q),
            CriterionSection::C { c } => Criterion::c_optimality(c.clone())?,
            CriterionSection::Trace { matrix } => {
                let r = matrix.first().map_or(0, |row| row.len());
                if matrix.iter().any(|row| row.len() != r) {
                    return Err(DesignError::InvalidCriterion("matrix rows differ in length".into()));
                }
                Criterion::trace(matrix.len(), r, matrix.concat())?
            }
        };
        criterion.check_dim(q)?;
        Ok(criterion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub model: ModelSection,
    /// Required by maximin tasks; the app4 preset supplies its own criteria.
    #[serde(default)]
    pub criterion: Option<CriterionSection>,
    /// Optimal single-objective loss; solved on the candidate set when absent.
    #[serde(default)]
    pub reference_loss: Option<f64>,
}

/// Design to check: a file path, or inline points and weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub design: Option<PathBuf>,
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Set by the command-line subcommand when omitted from the file.
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Application id for `task = "preset"`.
    #[serde(default)]
    pub app: Option<AppId>,
    /// Run counts for presets; replaces the application's own list.
    #[serde(default)]
    pub n_values: Option<Vec<u32>>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub space: Option<SpaceSection>,
    #[serde(default)]
    pub criterion: Option<CriterionSection>,
    #[serde(default)]
    pub objectives: Vec<ObjectiveSection>,
    #[serde(default)]
    pub approx: ApproxSolveOptions,
    #[serde(default)]
    pub anneal: Option<AnnealConfig>,
    #[serde(default)]
    pub verify: Option<VerifySection>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub restarts: Option<usize>,
    pub n: Option<u32>,
}

impl RunConfig {
    pub fn new(task: Task) -> Self {
        RunConfig {
            task: Some(task),
            seed: None,
            n: None,
            out: None,
            app: None,
            n_values: None,
            model: None,
            space: None,
            criterion: None,
            objectives: Vec::new(),
            approx: ApproxSolveOptions::default(),
            anneal: None,
            verify: None,
        }
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(r) = o.restarts {
            let task = self.task;
            self.anneal.get_or_insert_with(|| default_anneal(task)).restarts = r;
        }
        if let Some(n) = o.n {
            self.n = Some(n);
        }
    }

    /// Fills every default so the config can be echoed verbatim; the seed
    /// comes from the top level, else from `[anneal]`, else 42.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let seed = c
            .seed
            .or_else(|| c.anneal.as_ref().map(|a| a.seed))
            .unwrap_or(DEFAULT_SEED);
        c.seed = Some(seed);
        c.out.get_or_insert_with(|| PathBuf::from(DEFAULT_OUT));
        let takes_anneal = matches!(c.task, Some(Task::Exact | Task::MaximinExact | Task::Preset));
        if takes_anneal || c.anneal.is_some() {
            let task = c.task;
            c.anneal.get_or_insert_with(|| default_anneal(task)).seed = seed;
        }
        c
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// Checks that the sections required by the task are present.
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let Some(task) = self.task else {
            return Err(ConfigError("`task` is not set".into()));
        };
        let missing = |what: &str| Err(ConfigError(format!("task `{}` requires {what}", self.task_name())));
        self.approx.validate()?;
        if let Some(a) = &self.anneal {
            a.validate()?;
        }
        let needs_n = matches!(task, Task::Exact | Task::MaximinExact);
        if needs_n {
            match self.n {
                None => return missing("`n`"),
                Some(0) => return Err(ConfigError("`n` must be at least 1".into())),
                Some(_) => {}
            }
        }
        if let Some(ns) = &self.n_values {
            if ns.is_empty() || ns.contains(&0) {
                return Err(ConfigError("`n_values` must be positive".into()));
            }
        }
        match task {
            Task::Approx | Task::Exact | Task::Verify => {
                if self.model.is_none() {
                    return missing("a [model] section");
                }
                if self.space.is_none() {
                    return missing("a [space] section");
                }
                if self.criterion.is_none() {
                    return missing("a [criterion] section");
                }
            }
            Task::MaximinApprox | Task::MaximinExact => {
                if self.space.is_none() {
                    return missing("a [space] section");
                }
                if self.objectives.len() < 2 {
                    return missing("at least two [[objectives]]");
                }
                if self.objectives.iter().any(|o| o.criterion.is_none()) {
                    return missing("a criterion in every [[objectives]] entry");
                }
            }
            Task::Preset => {
                if self.app.is_none() {
                    return missing("`app`");
                }
            }
        }
        if task == Task::Verify {
            let Some(v) = &self.verify else {
                return missing("a [verify] section");
            };
            let inline = v.points.is_some() || v.weights.is_some();
            if v.design.is_some() == inline {
                return Err(ConfigError(
                    "[verify] takes either `design` or both `points` and `weights`".into(),
                ));
            }
            if inline && (v.points.is_none() || v.weights.is_none()) {
                return Err(ConfigError(
                    "[verify] needs both `points` and `weights`".into(),
                ));
            }
        }
        Ok(())
    }

    /// The task; `Approx` when unset (rejected by `validate`).
    pub fn task(&self) -> Task {
        self.task.unwrap_or(Task::Approx)
    }

    pub fn task_name(&self) -> &'static str {
        match self.task() {
            Task::Approx => "approx",
            Task::Exact => "exact",
            Task::MaximinApprox => "maximin_approx",
            Task::MaximinExact => "maximin_exact",
            Task::Verify => "verify",
            Task::Preset => "preset",
        }
    }
}
