//! Bubble-tree analysis of ε-harmonic sequences: schedules and the limits
//! `μ`, `ν`; concentration detection and rescaling; the body/bubble/neck
//! energy split and the energy identities; neck geometry.

mod concentration;
mod decomposition;
mod neck;
mod schedule;

pub use concentration::{bubble_record, detect_concentration, rescale_window, BubbleRecord, Concentration, WindowSpec};
pub use decomposition::{
    energy_decomposition, verify_dirichlet_identity_alpha, verify_energy_identity, BubbleTerm, EnergyBreakdown,
    IdentityReport, IdentityRow, IdentityVerdict,
};
pub use neck::{circle_average, neck_analysis, regularity_ratio, NeckAnalysis, RegularityRatio};
pub use schedule::{
    alpha_mu, analytic_mu_nu, intrinsic_criterion, intrinsic_criterion_analytic, mu_k, mu_nu, nu_k, trend,
    AlphaSchedule, AnalyticSchedule, BiharmonicGrowth, EpsilonForm, IntrinsicReport, LimitSource, MuNu, RadiusForm,
    Regime, Schedule, ScheduleEntry, Trend, Verdict,
};
