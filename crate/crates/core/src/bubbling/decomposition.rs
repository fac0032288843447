//! Body / bubble / neck splitting of the ε-energy and the energy identities.

use serde::{Deserialize, Serialize};

use super::schedule::{trend, Trend};
use crate::calculus::{Operators, Region};
use crate::energy::{epsilon_energy, EnergyReport};
use crate::error::{Error, Result};
use crate::geometry::{ConformalChart, MapField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub epsilon: f64,
    pub r: f64,
    /// Bubble cut `R` (the bubble is `B_{R r}`).
    pub cut_radius: f64,
    /// Outer neck radius `R0`.
    pub neck_outer: f64,
    /// `M ∖ B_{R0}`.
    pub body: EnergyReport,
    /// `B_{R r}`.
    pub bubble: EnergyReport,
    /// `B_{R0} ∖ B_{R r}`.
    pub neck: EnergyReport,
    pub total: f64,
    /// `total - (body + bubble + neck)` of the ε-energy.
    pub additivity_gap: f64,
    /// `2 e^{-2ρ(0)} μ B` when `μ` and the bubble biharmonic energy are given.
    pub predicted_neck: Option<f64>,
}

/// Splits `E_ε(u)` around a concentration point at the grid origin.
///
/// The regions are concentric with the grid, so the point must be the center
/// node; recenter with [`super::rescale_window`] first otherwise.
#[allow(clippy::too_many_arguments)]
pub fn energy_decomposition(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    eps: f64,
    x: [f64; 2],
    r: f64,
    cut_radius: f64,
    neck_outer: f64,
    prediction: Option<(f64, f64)>,
) -> Result<EnergyBreakdown> {
    let g = ops.grid();
    if !g.includes_disk() || x[0].hypot(x[1]) > 0.0 {
        return Err(Error::RegionOutOfRange(format!(
            "decomposition needs the concentration point at the center of a disk grid, got ({}, {})",
            x[0], x[1]
        )));
    }
    let inner = cut_radius * r;
    if !(r > 0.0 && inner < neck_outer && neck_outer < g.r_max()) {
        return Err(Error::RegionOutOfRange(format!(
            "need 0 < R r < R0 < r_max (R r = {inner}, R0 = {neck_outer}, r_max = {})",
            g.r_max()
        )));
    }
    let full = epsilon_energy(ops, chart, u, eps, Region::Full)?;
    let body = epsilon_energy(ops, chart, u, eps, Region::Annulus(neck_outer, g.r_max()))?;
    let bubble = epsilon_energy(ops, chart, u, eps, Region::Ball(inner))?;
    let neck = epsilon_energy(ops, chart, u, eps, Region::Annulus(inner, neck_outer))?;
    let total = full.epsilon_total;
    let additivity_gap = total - (body.epsilon_total + bubble.epsilon_total + neck.epsilon_total);
    let predicted_neck = prediction.map(|(mu, b)| 2.0 * (-2.0 * chart.rho_at_origin()).exp() * mu * b);
    Ok(EnergyBreakdown {
        epsilon: eps,
        r,
        cut_radius,
        neck_outer,
        body,
        bubble,
        neck,
        total,
        additivity_gap,
        predicted_neck,
    })
}

/// One bubble's contribution to the energy identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleTerm {
    pub dirichlet: f64,
    pub biharmonic: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub k: usize,
    pub measured: f64,
    pub gap: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityVerdict {
    /// The last gap is within tolerance.
    Consistent,
    /// The gap is outside tolerance but still shrinking.
    Approaching,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub predicted: f64,
    /// Part of the prediction not carried by the limit map and the bubbles.
    pub defect: f64,
    pub rows: Vec<IdentityRow>,
    pub gap_trend: Trend,
    pub verdict: IdentityVerdict,
}

fn report(predicted: f64, defect: f64, measured: &[(usize, f64)], rel_tol: f64) -> IdentityReport {
    let rows: Vec<IdentityRow> = measured
        .iter()
        .map(|&(k, m)| {
            let gap = m - predicted;
            IdentityRow { k, measured: m, gap, relative_gap: gap / predicted.abs().max(f64::MIN_POSITIVE) }
        })
        .collect();
    let abs_gaps: Vec<f64> = rows.iter().map(|r| r.relative_gap.abs()).collect();
    let gap_trend = trend(&abs_gaps);
    let verdict = match abs_gaps.last() {
        Some(&g) if g <= rel_tol => IdentityVerdict::Consistent,
        Some(_) if abs_gaps.windows(2).all(|w| w[1] < w[0]) && abs_gaps.len() > 1 => IdentityVerdict::Approaching,
        _ => IdentityVerdict::Inconsistent,
    };
    IdentityReport { predicted, defect, rows, gap_trend, verdict }
}

fn check_bubbles(bubbles: &[BubbleTerm]) -> Result<()> {
    for b in bubbles {
        if !(b.dirichlet >= 0.0 && b.biharmonic >= 0.0 && b.mu.is_finite() && b.mu >= 0.0) {
            return Err(Error::InvalidSchedule(format!("invalid bubble term {b:?}")));
        }
    }
    Ok(())
}

/// `lim E_ε(u_k) = E(u_∞) + Σ_i (E(ω_i) + 2 e^{-2ρ(0)} μ_i B(ω_i))`,
/// checked against the measured totals `(k, E_ε(u_k))`.
pub fn verify_energy_identity(
    measured: &[(usize, f64)],
    limit_energy: f64,
    bubbles: &[BubbleTerm],
    rho0: f64,
    rel_tol: f64,
) -> Result<IdentityReport> {
    check_bubbles(bubbles)?;
    let defect: f64 = bubbles.iter().map(|b| 2.0 * (-2.0 * rho0).exp() * b.mu * b.biharmonic).sum();
    let predicted = limit_energy + bubbles.iter().map(|b| b.dirichlet).sum::<f64>() + defect;
    Ok(report(predicted, defect, measured, rel_tol))
}

/// `lim ∫|∇u_α|^2 = E(u_∞) + Σ_i (1 + 2 log μ_i) E(ω_i)` for the α-energy,
/// checked against the measured Dirichlet energies.
pub fn verify_dirichlet_identity_alpha(
    measured: &[(usize, f64)],
    limit_energy: f64,
    bubbles: &[BubbleTerm],
    rel_tol: f64,
) -> Result<IdentityReport> {
    check_bubbles(bubbles)?;
    if let Some(b) = bubbles.iter().find(|b| b.mu < 1.0) {
        return Err(Error::InvalidMu(b.mu));
    }
    let defect: f64 = bubbles.iter().map(|b| 2.0 * b.mu.ln() * b.dirichlet).sum();
    let predicted = limit_energy + bubbles.iter().map(|b| b.dirichlet).sum::<f64>() + defect;
    Ok(report(predicted, defect, measured, rel_tol))
}
