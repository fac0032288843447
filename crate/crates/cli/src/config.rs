//! Run configuration: one TOML file, one section per command.

use std::path::{Path, PathBuf};

use epsharm::bubbling::{AlphaSchedule, AnalyticSchedule, BubbleTerm, RadiusForm, Schedule, ScheduleEntry};
use epsharm::geometry::{ConformalChart, PolarGrid, RhoSpec};
use epsharm::solver::SolveOptions;
use epsharm::synth::{BodyMap, CutRule, DiskSpec, NeckMode, RationalBubble};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(key: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{key}: {msg}"))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every random perturbation that does not carry its own.
    #[serde(default)]
    pub seed: u64,
    /// Per-k parallelism in synth and analyze.
    #[serde(default)]
    pub parallel: bool,
    pub output: OutputConfig,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub chart: ChartConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub solver: SolveOptions,
    pub solve: Option<SolveConfig>,
    pub sequence: Option<SequenceConfig>,
    pub schedule: Option<ScheduleConfig>,
    pub glue: Option<GlueConfig>,
    pub analyze: Option<AnalyzeConfig>,
    pub verify: Option<VerifyConfig>,
    pub report: Option<ReportConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    #[default]
    Disk,
    Annulus,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub kind: GridKind,
    pub n_r: usize,
    pub n_theta: usize,
    /// Innermost ring radius (the first ring of a disk grid).
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    #[serde(default)]
    pub rho: RhoSpec,
    /// Chart radius; the grid radius when absent.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub ambient_dim: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { ambient_dim: 3 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `ω(x / scale)` for a rational bubble `ω`.
    Bubble {
        #[serde(default = "RationalBubble::identity")]
        bubble: RationalBubble,
        #[serde(default = "one")]
        scale: f64,
    },
    Constant { value: Vec<f64> },
    /// A previously written field file; its grid replaces `[grid]`.
    Field { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub initial: InitialConfig,
    pub perturbation: Option<Perturbation>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    /// Strictly decreasing; each solve starts from the previous result.
    pub epsilons: Vec<f64>,
    pub initial: InitialConfig,
    pub perturbation: Option<Perturbation>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Analytic {
        radius: RadiusForm,
        epsilon: epsharm::bubbling::EpsilonForm,
        k_first: usize,
        k_last: usize,
    },
    Entries { entries: Vec<ScheduleEntry> },
}

impl ScheduleConfig {
    pub fn analytic(&self) -> Option<AnalyticSchedule> {
        match *self {
            ScheduleConfig::Analytic { radius, epsilon, .. } => Some(AnalyticSchedule { radius, epsilon }),
            ScheduleConfig::Entries { .. } => None,
        }
    }

    pub fn build(&self) -> Result<Schedule, ConfigError> {
        match self {
            ScheduleConfig::Analytic { k_first, k_last, .. } => {
                if k_first > k_last {
                    return Err(bad("schedule.k_last", format!("must be >= k_first ({k_first})")));
                }
                Schedule::from_analytic(self.analytic().unwrap(), *k_first..=*k_last).map_err(|e| bad("schedule", e))
            }
            ScheduleConfig::Entries { entries } => {
                Schedule::from_entries(entries.clone()).map_err(|e| bad("schedule.entries", e))
            }
        }
    }
}

fn quarter() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlueConfig {
    #[serde(default = "RationalBubble::identity")]
    pub bubble: RationalBubble,
    pub neck: NeckMode,
    pub neck_direction: Option<Vec<f64>>,
    #[serde(default = "constant_body")]
    pub body: BodyMap,
    pub cuts: CutRule,
    #[serde(default = "quarter")]
    pub ramp_fraction: f64,
}

fn constant_body() -> BodyMap {
    BodyMap::Constant { value: None }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Output directory of a previous solve, sequence or synth run.
    pub input: PathBuf,
    /// Use planted annotations from the sidecars when present.
    #[serde(default = "yes")]
    pub use_truth: bool,
    /// Bubble cut `R` and outer neck radius `R0` for fields without annotations.
    pub bubble_cut: Option<f64>,
    pub neck_outer: Option<f64>,
    /// Bubble used for `B` when no annotation carries it.
    #[serde(default = "RationalBubble::identity")]
    pub bubble: RationalBubble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    /// `lim E_ε = E(u_∞) + Σ (E(ω) + 2 e^{-2ρ(0)} μ B(ω))`.
    Epsilon,
    /// `lim ∫|∇u_α|^2 = E(u_∞) + Σ (1 + 2 log μ) E(ω)`.
    AlphaDirichlet,
}

fn tenth() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Output directory of a previous analyze run.
    pub input: PathBuf,
    pub identity: Identity,
    /// `E(u_∞)`; taken from the annotations when absent.
    pub limit_energy: Option<f64>,
    /// Bubble terms; a single term built from the last analysed field when absent.
    pub bubbles: Option<Vec<BubbleTerm>>,
    /// Required by the alpha identity.
    pub alpha: Option<AlphaSchedule>,
    #[serde(default = "tenth")]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// `B_k = β / r_k^2` for the intrinsic criterion; `β = 64π/3` when absent.
    pub beta: Option<f64>,
    /// Output directories whose JSON reports are collected.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if self.target.ambient_dim != 3 {
            return Err(bad("target.ambient_dim", format!("bubbles and necks need S^2 in R^3, got {}", self.target.ambient_dim)));
        }
        if let Some(gamma) = self.chart.gamma {
            if !(gamma > 0.0) {
                return Err(bad("chart.gamma", format!("must be > 0, got {gamma}")));
            }
        }
        self.solver.validate().map_err(|e| bad("solver", e))?;
        if let Some(s) = &self.solve {
            check_epsilon("solve.epsilon", s.epsilon)?;
            check_initial("solve.initial", &s.initial)?;
            check_perturbation("solve.perturbation", &s.perturbation)?;
        }
        if let Some(s) = &self.sequence {
            if s.epsilons.is_empty() {
                return Err(bad("sequence.epsilons", "must not be empty"));
            }
            for (i, &e) in s.epsilons.iter().enumerate() {
                check_epsilon(&format!("sequence.epsilons[{i}]"), e)?;
            }
            if s.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(bad("sequence.epsilons", "must be strictly decreasing"));
            }
            check_initial("sequence.initial", &s.initial)?;
            check_perturbation("sequence.perturbation", &s.perturbation)?;
        }
        if let Some(s) = &self.schedule {
            s.build()?;
        }
        if let Some(g) = &self.glue {
            if !(g.ramp_fraction > 0.0 && g.ramp_fraction < 0.5) {
                return Err(bad("glue.ramp_fraction", format!("must lie in (0, 1/2), got {}", g.ramp_fraction)));
            }
            let c = g.cuts;
            if !(c.bubble_base > 0.0 && c.neck_outer > 0.0 && c.bubble_exponent.is_finite()) {
                return Err(bad("glue.cuts", "bubble_base and neck_outer must be > 0"));
            }
        }
        if let Some(a) = &self.analyze {
            for (key, v) in [("analyze.bubble_cut", a.bubble_cut), ("analyze.neck_outer", a.neck_outer)] {
                if v.is_some_and(|v| !(v > 0.0)) {
                    return Err(bad(key, "must be > 0"));
                }
            }
        }
        if let Some(v) = &self.verify {
            if !(v.rel_tol > 0.0) {
                return Err(bad("verify.rel_tol", "must be > 0"));
            }
            if v.identity == Identity::AlphaDirichlet && v.alpha.is_none() {
                return Err(bad("verify.alpha", "required by the alpha_dirichlet identity"));
            }
        }
        if let Some(r) = &self.report {
            if r.beta.is_some_and(|b| !(b > 0.0)) {
                return Err(bad("report.beta", "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn section<'a, T>(&self, name: &str, s: &'a Option<T>) -> Result<&'a T, ConfigError> {
        s.as_ref().ok_or_else(|| bad(name, "section is required by this command"))
    }

    pub fn grid(&self) -> Result<PolarGrid, ConfigError> {
        self.section("grid", &self.grid)?.build()
    }

    pub fn chart(&self, grid: &PolarGrid) -> Result<ConformalChart, ConfigError> {
        let gamma = self.chart.gamma.unwrap_or(grid.r_max());
        ConformalChart::new(grid, gamma, self.chart.rho.clone()).map_err(|e| bad("chart", e))
    }

    pub fn disk(&self) -> Result<DiskSpec, ConfigError> {
        let g = self.section("grid", &self.grid)?;
        if g.kind != GridKind::Disk {
            return Err(bad("grid.kind", "glued sequences need a disk grid"));
        }
        Ok(DiskSpec { r_first: g.r_min, r_max: g.r_max, n_r: g.n_r, n_theta: g.n_theta })
    }
}

impl GridConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.n_theta < 8 || !self.n_theta.is_multiple_of(2) {
            return Err(bad("grid.n_theta", format!("must be even and >= 8, got {}", self.n_theta)));
        }
        if self.n_r < 4 {
            return Err(bad("grid.n_r", format!("must be >= 4, got {}", self.n_r)));
        }
        if !(self.r_min > 0.0) {
            return Err(bad("grid.r_min", format!("must be > 0, got {}", self.r_min)));
        }
        if !(self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err(bad("grid.r_max", format!("must be finite and > r_min, got {}", self.r_max)));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<PolarGrid, ConfigError> {
        match self.kind {
            GridKind::Disk => PolarGrid::disk(self.r_min, self.r_max, self.n_r, self.n_theta),
            GridKind::Annulus => PolarGrid::annulus(self.r_min, self.r_max, self.n_r, self.n_theta),
        }
        .map_err(|e| bad("grid", e))
    }
}

fn check_epsilon(key: &str, e: f64) -> Result<(), ConfigError> {
    if !(e >= 0.0 && e.is_finite()) {
        return Err(bad(key, format!("must be finite and >= 0, got {e}")));
    }
    Ok(())
}

fn check_initial(key: &str, i: &InitialConfig) -> Result<(), ConfigError> {
    match i {
        InitialConfig::Bubble { scale, .. } if !(*scale > 0.0) => Err(bad(&format!("{key}.scale"), "must be > 0")),
        InitialConfig::Constant { value } if value.len() != 3 => {
            Err(bad(&format!("{key}.value"), format!("needs 3 components, got {}", value.len())))
        }
        _ => Ok(()),
    }
}

fn check_perturbation(key: &str, p: &Option<Perturbation>) -> Result<(), ConfigError> {
    match p {
        Some(p) if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) => {
            Err(bad(&format!("{key}.amplitude"), format!("must be finite and >= 0, got {}", p.amplitude)))
        }
        _ => Ok(()),
    }
}
