//! The six subcommands.

use std::f64::consts::PI;
use std::path::Path;

use epsharm::bubbling::{
    energy_decomposition, intrinsic_criterion_analytic, mu_k, mu_nu, neck_analysis, nu_k, trend,
    verify_dirichlet_identity_alpha, verify_energy_identity, alpha_mu, detect_concentration, BiharmonicGrowth,
    BubbleTerm, IdentityReport, IdentityVerdict, IntrinsicReport, MuNu, Schedule, ScheduleEntry, Trend,
};
use epsharm::calculus::Operators;
use epsharm::geometry::{ConformalChart, MapField};
use epsharm::solver::{continuation_solve, minimize};
use epsharm::synth::{glue_sequence, perturbed, GlueSpec, GlueTruth};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Identity, InitialConfig, Perturbation, RunConfig};
use crate::output::*;
use crate::{CliError, ConfigError};

/// Maps `f` over `items`, in parallel when asked; the output order is the input order.
fn map_k<T: Sync, R: Send>(
    parallel: bool,
    items: &[T],
    f: impl Fn(&T) -> Result<R, CliError> + Sync + Send,
) -> Result<Vec<R>, CliError> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

fn initial_field(
    cfg: &RunConfig,
    initial: &InitialConfig,
    perturbation: &Option<Perturbation>,
) -> Result<(MapField, ConformalChart), CliError> {
    let (u, chart) = match initial {
        InitialConfig::Field { path } => {
            let f = epsharm::io::load_field(path)?;
            (f.field, f.chart)
        }
        InitialConfig::Bubble { bubble, scale } => {
            let g = cfg.grid()?;
            let chart = cfg.chart(&g)?;
            (MapField::from_fn(g, 3, |x, y| bubble.value(x / scale, y / scale).to_vec())?, chart)
        }
        InitialConfig::Constant { value } => {
            let g = cfg.grid()?;
            let chart = cfg.chart(&g)?;
            (MapField::constant(g, value)?, chart)
        }
    };
    let u = match perturbation {
        Some(p) => perturbed(&u, p.amplitude, p.seed.unwrap_or(cfg.seed))?,
        None => u,
    };
    Ok((u, chart))
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let s = cfg.section("solve", &cfg.solve)?;
    let (u0, chart) = initial_field(cfg, &s.initial, &s.perturbation)?;
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    let r = minimize(&u0, s.epsilon, &chart, &cfg.solver)?;
    let summary = SolveSummary::new(&r);
    let entry = write_field(dir, &r.field, &chart, &Sidecar { k: 1, epsilon: s.epsilon, truth: None, solve: Some(summary.clone()) })?;
    write_json(&dir.join(MANIFEST), &Manifest { kind: RunKind::Solve, fields: vec![entry] })?;
    write_json(&dir.join("report.json"), &summary)
}

pub fn sequence(cfg: &RunConfig) -> Result<(), CliError> {
    let s = cfg.section("sequence", &cfg.sequence)?;
    if s.epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(ConfigError("sequence.epsilons: continuation needs every epsilon > 0".into()).into());
    }
    let (u0, chart) = initial_field(cfg, &s.initial, &s.perturbation)?;
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    let results = continuation_solve(&u0, &chart, &s.epsilons, &cfg.solver)?;
    let mut fields = Vec::new();
    let mut summaries = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let summary = SolveSummary::new(r);
        let sidecar = Sidecar { k: i + 1, epsilon: r.epsilon, truth: None, solve: Some(summary.clone()) };
        fields.push(write_field(dir, &r.field, &chart, &sidecar)?);
        summaries.push(summary);
    }
    write_json(&dir.join(MANIFEST), &Manifest { kind: RunKind::Sequence, fields })?;
    write_json(&dir.join("sequence.json"), &summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    /// Absent when the schedule is too short for finite-data estimates.
    pub schedule: Option<MuNu>,
    pub truth: Vec<GlueTruth>,
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let glue = cfg.section("glue", &cfg.glue)?;
    let schedule = cfg.section("schedule", &cfg.schedule)?.build()?;
    let grid = cfg.disk()?;
    let g = grid.grid()?;
    let chart = cfg.chart(&g)?;
    let spec = GlueSpec {
        bubble: glue.bubble.clone(),
        schedule: schedule.clone(),
        neck: glue.neck.clone(),
        neck_direction: glue.neck_direction.clone(),
        body: glue.body.clone(),
        cuts: glue.cuts,
        grid,
        ramp_fraction: glue.ramp_fraction,
        rho_origin: chart.rho_at_origin(),
    };
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    let glued = glue_sequence(&spec)?;
    let fields = map_k(cfg.parallel, &glued, |gl| {
        let t = &gl.truth;
        write_field(dir, &gl.field, &chart, &Sidecar { k: t.k, epsilon: t.epsilon, truth: Some(t.clone()), solve: None })
    })?;
    write_json(&dir.join(MANIFEST), &Manifest { kind: RunKind::Synth, fields })?;
    let report = SynthReport { schedule: mu_nu(&schedule).ok(), truth: glued.into_iter().map(|g| g.truth).collect() };
    write_json(&dir.join("synth.json"), &report)
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationSource {
    Planted,
    Detected,
}

/// One analysed field; the CSV carries the first twelve columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub k: usize,
    pub eps: f64,
    pub r_k: f64,
    pub mu_k: f64,
    pub nu_k: f64,
    pub e_body: f64,
    pub e_bubble: f64,
    pub e_neck: f64,
    pub predicted_neck: f64,
    pub osc: f64,
    pub neck_length: f64,
    pub predicted_length: f64,
    pub source: ConcentrationSource,
    pub x: [f64; 2],
    pub bubble_cut: f64,
    pub neck_inner: f64,
    pub neck_outer: f64,
    pub e_total: f64,
    pub dirichlet_total: f64,
    pub additivity_gap: f64,
    pub geodesic_deviation: f64,
    pub rho0: f64,
    pub bubble_dirichlet: f64,
    pub bubble_biharmonic: f64,
    /// Planted finite-`k` neck factor; see [`GlueTruth::truncation`].
    pub truncation: Option<f64>,
    pub limit_energy: Option<f64>,
}

pub const CSV_HEADER: [&str; 12] = [
    "k", "eps", "r_k", "mu_k", "nu_k", "E_body", "E_bubble", "E_neck", "predicted_neck", "osc", "neck_length",
    "predicted_length",
];

fn analyze_field(cfg: &crate::config::AnalyzeConfig, f: &LoadedField) -> Result<AnalysisRow, CliError> {
    let u = &f.file.field;
    let chart = &f.file.chart;
    let ops = Operators::new(u.grid());
    let truth = f.sidecar.as_ref().and_then(|s| s.truth.as_ref()).filter(|_| cfg.use_truth);
    let eps = f.sidecar.as_ref().map_or(f.entry.epsilon, |s| s.epsilon);
    let rho0 = chart.rho_at_origin();
    let w = (-2.0 * rho0).exp();
    let (source, x, r, cut, outer, mu, nu, bd, bb, predicted_neck) = match truth {
        Some(t) => (
            ConcentrationSource::Planted,
            t.x,
            t.r,
            t.bubble_cut,
            t.neck_outer,
            t.mu_k,
            t.nu_k,
            t.bubble_dirichlet,
            t.bubble_biharmonic,
            t.predicted_neck,
        ),
        None => {
            let c = detect_concentration(&ops, u)?;
            // checked before any computation in `analyze`
            let (cut, outer) = (cfg.bubble_cut.unwrap(), cfg.neck_outer.unwrap());
            let (mu, bb) = (mu_k(eps, c.r), cfg.bubble.biharmonic_energy());
            let x = if c.node == 0 && u.grid().includes_disk() { [0.0, 0.0] } else { c.x };
            let bd = cfg.bubble.dirichlet_energy();
            (ConcentrationSource::Detected, x, c.r, cut, outer, mu, nu_k(eps, c.r), bd, bb, 2.0 * w * mu * bb)
        }
    };
    let b = energy_decomposition(&ops, chart, u, eps, x, r, cut, outer, Some((mu, bb)))?;
    let neck = neck_analysis(u, chart, cut * r, outer, nu, bb)?;
    Ok(AnalysisRow {
        k: f.entry.k,
        eps,
        r_k: r,
        mu_k: mu,
        nu_k: nu,
        e_body: b.body.epsilon_total,
        e_bubble: b.bubble.epsilon_total,
        e_neck: b.neck.epsilon_total,
        predicted_neck,
        osc: neck.osc,
        neck_length: neck.measured_length,
        predicted_length: neck.predicted_length,
        source,
        x,
        bubble_cut: cut,
        neck_inner: cut * r,
        neck_outer: outer,
        e_total: b.total,
        dirichlet_total: epsharm::energy::dirichlet_energy(&ops, u, epsharm::calculus::Region::Full)?,
        additivity_gap: b.additivity_gap,
        geodesic_deviation: neck.geodesic_deviation,
        rho0,
        bubble_dirichlet: bd,
        bubble_biharmonic: bb,
        truncation: truth.map(|t| t.truncation),
        limit_energy: truth.map(|t| t.limit_energy),
    })
}

impl AnalysisRow {
    fn csv(&self) -> Vec<f64> {
        vec![
            self.eps,
            self.r_k,
            self.mu_k,
            self.nu_k,
            self.e_body,
            self.e_bubble,
            self.e_neck,
            self.predicted_neck,
            self.osc,
            self.neck_length,
            self.predicted_length,
        ]
    }
}

pub fn analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let a = cfg.section("analyze", &cfg.analyze)?;
    let manifest = read_manifest(&a.input)?;
    let loaded: Vec<LoadedField> =
        manifest.fields.iter().map(|e| load_entry(&a.input, e)).collect::<Result<_, _>>()?;
    let planted = |f: &LoadedField| a.use_truth && f.sidecar.as_ref().is_some_and(|s| s.truth.is_some());
    if loaded.iter().any(|f| !planted(f)) {
        for (key, v) in [("analyze.bubble_cut", a.bubble_cut), ("analyze.neck_outer", a.neck_outer)] {
            if v.is_none() {
                return Err(ConfigError(format!("{key}: required for fields without planted annotations")).into());
            }
        }
    }
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    let rows = map_k(cfg.parallel, &loaded, |f| analyze_field(a, f))?;
    let keys: Vec<usize> = rows.iter().map(|r| r.k).collect();
    let table: Vec<Vec<f64>> = rows.iter().map(AnalysisRow::csv).collect();
    write_csv(&dir.join("analysis.csv"), &CSV_HEADER, &table, &keys)?;
    write_json(&dir.join("analysis.json"), &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeckRow {
    pub k: usize,
    pub measured: f64,
    pub predicted: f64,
    pub relative_gap: f64,
}

/// Measured neck ε-energy against the (truncation-corrected) `2 e^{-2ρ(0)} μ_k B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeckCheck {
    pub rows: Vec<NeckRow>,
    pub gap_trend: Trend,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub identity: String,
    pub statement: String,
    pub mu: f64,
    pub rho0: f64,
    pub limit_energy: f64,
    /// Per-k totals use `body + bubble + neck / truncation`.
    pub truncation_corrected: bool,
    pub bubbles: Vec<BubbleTerm>,
    pub report: IdentityReport,
    pub neck: Option<NeckCheck>,
    pub verdict: String,
}

fn limit_mu(rows: &[AnalysisRow]) -> f64 {
    let entries = rows.iter().map(|r| ScheduleEntry { k: r.k, epsilon: r.eps, r: r.r_k, x: r.x }).collect();
    Schedule::from_entries(entries)
        .and_then(|s| mu_nu(&s))
        .map(|m| m.mu)
        .unwrap_or(rows.last().map_or(0.0, |r| r.mu_k))
}

fn neck_check(rows: &[AnalysisRow]) -> NeckCheck {
    let rows: Vec<NeckRow> = rows
        .iter()
        .map(|r| NeckRow {
            k: r.k,
            measured: r.e_neck,
            predicted: r.predicted_neck,
            relative_gap: (r.e_neck - r.predicted_neck) / r.predicted_neck.abs().max(f64::MIN_POSITIVE),
        })
        .collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.relative_gap.abs()).collect();
    NeckCheck { gap_trend: trend(&gaps), monotone: gaps.windows(2).all(|w| w[1] < w[0]), rows }
}

fn verdict_text(defect_term: &str, r: &IdentityReport) -> String {
    let status = match r.verdict {
        IdentityVerdict::Consistent => "consistent",
        IdentityVerdict::Approaching => "approaching",
        IdentityVerdict::Inconsistent => "inconsistent",
    };
    match r.rows.last() {
        Some(last) => format!(
            "defect ≈ {defect_term} = {:.6}; relative gap at k = {}: {:.3e} ({status})",
            r.defect, last.k, last.relative_gap
        ),
        None => format!("defect ≈ {defect_term} = {:.6}; no measurements ({status})", r.defect),
    }
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let v = cfg.section("verify", &cfg.verify)?;
    let rows: Vec<AnalysisRow> = read_json(&v.input.join("analysis.json"))?;
    let Some(last) = rows.last() else {
        return Err(CliError::Run(format!("{}: analysis has no rows", v.input.display())));
    };
    let limit_energy = v.limit_energy.or(last.limit_energy).unwrap_or(0.0);
    let mu = match (v.identity, &v.alpha) {
        (Identity::AlphaDirichlet, Some(a)) => alpha_mu(a)?,
        _ => limit_mu(&rows),
    };
    let bubbles = v.bubbles.clone().unwrap_or_else(|| {
        vec![BubbleTerm { dirichlet: last.bubble_dirichlet, biharmonic: last.bubble_biharmonic, mu }]
    });
    let out = match v.identity {
        Identity::Epsilon => {
            let corrected = rows.iter().all(|r| r.truncation.is_some());
            let measured: Vec<(usize, f64)> = rows
                .iter()
                .map(|r| match r.truncation {
                    Some(t) if corrected => (r.k, r.e_body + r.e_bubble + r.e_neck / t),
                    _ => (r.k, r.e_total),
                })
                .collect();
            let report = verify_energy_identity(&measured, limit_energy, &bubbles, last.rho0, v.rel_tol)?;
            VerifyReport {
                identity: "generalized_energy_identity".into(),
                statement: "lim E_eps(u_k) = E(u_inf) + sum_i [E(omega_i) + 2 e^{-2 rho(0)} mu_i B(omega_i)]".into(),
                mu,
                rho0: last.rho0,
                limit_energy,
                truncation_corrected: corrected,
                bubbles,
                verdict: verdict_text("2e^{−2ρ(0)}μ∫|Δω|²", &report),
                report,
                neck: Some(neck_check(&rows)),
            }
        }
        Identity::AlphaDirichlet => {
            let measured: Vec<(usize, f64)> = rows.iter().map(|r| (r.k, r.dirichlet_total)).collect();
            let report = verify_dirichlet_identity_alpha(&measured, limit_energy, &bubbles, v.rel_tol)?;
            VerifyReport {
                identity: "alpha_dirichlet_identity".into(),
                statement: "lim int |grad u_alpha|^2 = E(u_inf) + sum_i (1 + 2 log mu_i) E(omega_i)".into(),
                mu,
                rho0: last.rho0,
                limit_energy,
                truncation_corrected: false,
                bubbles,
                verdict: verdict_text("2 log(μ) E(ω)", &report),
                report,
                neck: None,
            }
        }
    };
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    write_json(&dir.join("verify.json"), &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub limits: Result<MuNu, String>,
    /// Only for closed-form schedules, with `B_k = β / r_k^2`.
    pub intrinsic: Option<Result<IntrinsicReport, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectedReport {
    pub input: String,
    pub file: String,
    pub content: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schedule: Option<ScheduleReport>,
    pub collected: Vec<CollectedReport>,
}

const REPORT_FILES: [&str; 5] = ["report.json", "sequence.json", "synth.json", "analysis.json", "verify.json"];

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let r = cfg.report.clone().unwrap_or(crate::config::ReportConfig { beta: None, inputs: Vec::new() });
    let beta = r.beta.unwrap_or(64.0 * PI / 3.0);
    let schedule = match &cfg.schedule {
        Some(s) => {
            let built = s.build()?;
            Some(ScheduleReport {
                limits: mu_nu(&built).map_err(|e| e.to_string()),
                intrinsic: s.analytic().map(|form| {
                    intrinsic_criterion_analytic(&form, BiharmonicGrowth::InverseSquare { beta }).map_err(|e| e.to_string())
                }),
            })
        }
        None => None,
    };
    let mut collected = Vec::new();
    for input in &r.inputs {
        if !input.is_dir() {
            return Err(CliError::Run(format!("{}: input directory not found", input.display())));
        }
        for file in REPORT_FILES {
            let p: &Path = &input.join(file);
            if p.exists() {
                collected.push(CollectedReport {
                    input: input.display().to_string(),
                    file: file.into(),
                    content: read_json(p)?,
                });
            }
        }
    }
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    write_json(&dir.join("report.json"), &Report { schedule, collected })
}
