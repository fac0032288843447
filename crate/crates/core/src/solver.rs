//! Projected gradient descent for the ε-energy with nodewise retraction onto
//! the sphere and Dirichlet boundary rings.
//!
//! The default search direction is the gradient in the energy metric: on the
//! tangent space at the current iterate it solves `P H P d = -P ∂E`, where `H`
//! is the (constant) Hessian of the ambient quadratic energy.

use serde::{Deserialize, Serialize};

use crate::banded::BandedSpd;
use crate::calculus::{Operators, Region};
use crate::energy::{energy_partials, epsilon_energy, epsilon_total, retract, EnergyReport};
use crate::error::{Error, Result};
use crate::geometry::{dot, ConformalChart, MapField};
use crate::sparse::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    /// Armijo backtracking, constant `1e-4`, shrink `1/2`.
    Backtracking,
    Fixed { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Energy-metric (Sobolev) gradient.
    Sobolev,
    /// Plain `L^2(dx_g)` gradient with the explicit stability step bound.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub step: StepRule,
    pub metric: Metric,
    /// Rings held at their initial values at each radial boundary.
    pub pinned_rings: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            residual_tol: 1e-7,
            step: StepRule::Backtracking,
            metric: Metric::Sobolev,
            pinned_rings: 2,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidOptions("max_iters must be >= 1".into()));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::InvalidOptions("residual_tol must be > 0".into()));
        }
        if let StepRule::Fixed { step } = self.step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::InvalidOptions("fixed step must be positive".into()));
            }
        }
        if self.pinned_rings < 1 {
            return Err(Error::InvalidOptions("pinned_rings must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// No step length gives a decrease; the iterate is at rounding level.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: MapField,
    pub epsilon: f64,
    pub iterations: usize,
    /// Residual of every recorded iterate, starting with the initial field.
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    /// `max_n ||u_n| - 1|` of every recorded iterate.
    pub constraint_history: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub report: EnergyReport,
}

/// Nodes within `rings` rings of a radial boundary.
pub fn pinned_mask(ops: &Operators, rings: usize) -> Vec<bool> {
    (0..ops.grid().n_nodes())
        .map(|n| ops.boundary_distance(n) < rings)
        .collect()
}

/// Orthonormal basis of the tangent space at `u` from a Householder reflection.
fn tangent_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let l = u.len();
    let m = (0..l)
        .max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()))
        .unwrap_or(0);
    let s = if u[m] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = u.to_vec();
    v[m] += s;
    let vv = dot(&v, &v);
    (0..l)
        .filter(|&k| k != m)
        .map(|k| (0..l).map(|i| f64::from(i == k) - 2.0 * v[i] * v[k] / vv).collect())
        .collect()
}

/// Scalar node Hessian `H = 2 (K + ε L^T W e^{-2ρ} L)` in lower-band storage.
fn node_hessian(ops: &Operators, chart: &ConformalChart, eps: f64) -> BandedSpd {
    let g = ops.grid();
    let nt = g.n_theta();
    let lap = ops.lap_matrix();
    let mut bw = nt;
    if eps > 0.0 {
        for n in 0..lap.n() {
            let cols: Vec<usize> = lap.row(n).map(|(c, _)| c).collect();
            let (lo, hi) = (cols.iter().min().unwrap(), cols.iter().max().unwrap());
            bw = bw.max(hi - lo);
        }
    }
    let mut h = BandedSpd::zeros(g.n_nodes(), bw);
    let (edges, ang, d2, w) = (ops.edges(), ops.angular_coefficients(), ops.d2_kernel(), ops.weights());
    for i in 0..g.n_r() {
        for j in 0..nt {
            let n = g.node(i, j);
            if edges[i] > 0.0 {
                let m = if i == 0 { 0 } else { g.node(i - 1, j) };
                h.add(n, n, edges[i]);
                h.add(m, m, edges[i]);
                h.add(n, m, -edges[i]);
            }
            let c = w[n] * ang[i];
            for mm in 0..nt {
                if mm == j {
                    continue;
                }
                let k = (j + nt - mm) % nt;
                h.add(n, n, c * d2[k]);
                let nm = g.node(i, mm);
                if n > nm {
                    h.add(n, nm, -c * d2[k]);
                }
            }
        }
    }
    if eps > 0.0 {
        let inv = chart.inv_metric();
        for n in 0..lap.n() {
            let c = eps * w[n] * inv[n];
            let row: Vec<(usize, f64)> = lap.row(n).collect();
            for &(p, lp) in &row {
                for &(q, lq) in &row {
                    if p >= q {
                        h.add(p, q, c * lp * lq);
                    }
                }
            }
        }
    }
    for i in 0..h.n() {
        for j in i.saturating_sub(bw)..=i {
            let v = h.get(i, j);
            h.add(i, j, v);
        }
    }
    h
}

/// Energy-metric direction on the free nodes, or `None` if the reduced
/// system is not numerically positive definite.
fn sobolev_direction(
    h: &BandedSpd,
    u: &MapField,
    partials: &[f64],
    free: &[Option<usize>],
) -> Option<Vec<f64>> {
    let dim = u.dim();
    let td = dim - 1;
    let n_free = free.iter().flatten().count();
    let bases: Vec<Vec<Vec<f64>>> = (0..u.n_nodes())
        .map(|n| if free[n].is_some() { tangent_basis(u.value(n)) } else { Vec::new() })
        .collect();
    let bw = h.bandwidth();
    let mut m = BandedSpd::zeros(n_free * td, bw * td + td - 1);
    for p in 0..u.n_nodes() {
        let Some(fp) = free[p] else { continue };
        for q in p.saturating_sub(bw)..=p {
            let Some(fq) = free[q] else { continue };
            let hv = h.get(p, q);
            if hv == 0.0 {
                continue;
            }
            for a in 0..td {
                for b in 0..td {
                    if p == q && b > a {
                        continue;
                    }
                    m.add(fp * td + a, fq * td + b, hv * dot(&bases[p][a], &bases[q][b]));
                }
            }
        }
    }
    if !m.factor() {
        return None;
    }
    let mut rhs = vec![0.0; n_free * td];
    for p in 0..u.n_nodes() {
        if let Some(fp) = free[p] {
            for a in 0..td {
                rhs[fp * td + a] = -dot(&bases[p][a], &partials[p * dim..(p + 1) * dim]);
            }
        }
    }
    let x = m.solve(&rhs);
    let mut d = vec![0.0; partials.len()];
    for p in 0..u.n_nodes() {
        if let Some(fp) = free[p] {
            for a in 0..td {
                for k in 0..dim {
                    d[p * dim + k] += x[fp * td + a] * bases[p][a][k];
                }
            }
        }
    }
    Some(d)
}

/// `L^2(dx_g)` gradient from partials, zero on pinned nodes.
fn l2_gradient(ops: &Operators, chart: &ConformalChart, u: &MapField, partials: &[f64], pinned: &[bool]) -> Vec<f64> {
    let dim = u.dim();
    let (w, m) = (ops.weights(), chart.metric());
    let mut g = partials.to_vec();
    for n in 0..u.n_nodes() {
        let gn = &mut g[n * dim..(n + 1) * dim];
        if pinned[n] {
            gn.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let un = u.value(n);
        let s = 1.0 / (w[n] * m[n]);
        let c = dot(gn, un);
        for k in 0..dim {
            gn[k] = (gn[k] - c * un[k]) * s;
        }
    }
    g
}

fn residual_norm(ops: &Operators, chart: &ConformalChart, grad: &[f64], dim: usize) -> f64 {
    let (w, m) = (ops.weights(), chart.metric());
    let terms: Vec<f64> = (0..w.len())
        .map(|n| {
            let g = &grad[n * dim..(n + 1) * dim];
            w[n] * m[n] * dot(g, g)
        })
        .collect();
    0.5 * pairwise_sum(&terms).sqrt()
}

/// Explicit step bound `0.2 h^4 / ε`, or `0.2 h^2` when `ε < h^2`.
pub fn stability_step(ops: &Operators, eps: f64) -> f64 {
    let h = ops.grid().min_radial_spacing();
    if eps >= h * h {
        0.2 * h.powi(4) / eps
    } else {
        0.2 * h * h
    }
}

/// Minimizes `E_ε` from `u0`, keeping the boundary rings of `u0` fixed.
///
/// The recorded residual is half the `L^2(dx_g)` norm of the tangent gradient
/// over the free nodes; it equals the norm of `(Δ_g u - ε Δ_g^2 u)^T` wherever
/// the stencils are clear of the boundary.
pub fn minimize(u0: &MapField, eps: f64, chart: &ConformalChart, opts: &SolveOptions) -> Result<SolveResult> {
    let ops = Operators::new(u0.grid());
    minimize_with(&ops, u0, eps, chart, opts)
}

pub fn minimize_with(
    ops: &Operators,
    u0: &MapField,
    eps: f64,
    chart: &ConformalChart,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidOptions(format!("epsilon must be >= 0, got {eps}")));
    }
    chart.check(u0.grid())?;
    if ops.grid() != u0.grid() {
        return Err(Error::ShapeMismatch("operators and field use different grids".into()));
    }
    let dim = u0.dim();
    let pinned = pinned_mask(ops, opts.pinned_rings);
    let mut next = 0;
    let free: Vec<Option<usize>> = pinned
        .iter()
        .map(|&p| {
            (!p).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    if next == 0 {
        return Err(Error::GridTooCoarse("no free nodes after pinning the boundary".into()));
    }
    let hess = match opts.metric {
        Metric::Sobolev => Some(node_hessian(ops, chart, eps)),
        Metric::L2 => None,
    };

    let mut u = u0.clone();
    let mut energy = epsilon_total(ops, chart, &u, eps)?;
    if !energy.is_finite() {
        return Err(Error::NonFiniteEnergy(0));
    }
    let mut energy_history = vec![energy];
    let mut constraint_history = vec![u.constraint_violation()];
    let mut residual_history = Vec::new();
    let mut increases = 0;
    let mut iterations = 0;
    let stop_reason = loop {
        let partials = energy_partials(ops, chart, &u, eps)?;
        let grad = l2_gradient(ops, chart, &u, &partials, &pinned);
        let res = residual_norm(ops, chart, &grad, dim);
        residual_history.push(res);
        if res <= opts.residual_tol {
            break StopReason::Converged;
        }
        if iterations == opts.max_iters {
            break StopReason::MaxIterations;
        }
        let (dir, t0) = match hess.as_ref().and_then(|h| sobolev_direction(h, &u, &partials, &free)) {
            Some(d) => (d, 1.0),
            None => (grad.iter().map(|g| -g).collect(), stability_step(ops, eps)),
        };
        let slope: f64 = pairwise_sum(&partials.iter().zip(&dir).map(|(p, d)| p * d).collect::<Vec<_>>());
        if !(slope < 0.0) {
            break StopReason::Stalled;
        }
        let accepted = match opts.step {
            StepRule::Fixed { step } => {
                let cand = retract(&u, &dir, step)?;
                let e = epsilon_total(ops, chart, &cand, eps)?;
                if !e.is_finite() {
                    return Err(Error::NonFiniteEnergy(iterations + 1));
                }
                increases = if e > energy { increases + 1 } else { 0 };
                if increases >= 10 {
                    return Err(Error::Diverged(iterations + 1));
                }
                Some((cand, e))
            }
            StepRule::Backtracking => backtrack(ops, chart, &u, &dir, eps, energy, slope, t0)?,
        };
        let Some((cand, e)) = accepted else {
            break StopReason::Stalled;
        };
        u = cand;
        energy = e;
        iterations += 1;
        energy_history.push(energy);
        constraint_history.push(u.constraint_violation());
    };
    let report = epsilon_energy(ops, chart, &u, eps, Region::Full)?;
    Ok(SolveResult {
        field: u,
        epsilon: eps,
        iterations,
        residual_history,
        energy_history,
        constraint_history,
        converged: stop_reason == StopReason::Converged,
        stop_reason,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn backtrack(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    dir: &[f64],
    eps: f64,
    energy: f64,
    slope: f64,
    t0: f64,
) -> Result<Option<(MapField, f64)>> {
    let mut t = t0;
    let mut first = None;
    while t >= t0 * 1e-12 {
        let cand = retract(u, dir, t)?;
        let e = epsilon_total(ops, chart, &cand, eps)?;
        if e.is_finite() && e <= energy + 1e-4 * t * slope {
            return Ok(Some((cand, e)));
        }
        if first.is_none() && e.is_finite() {
            first = Some((cand, e));
        }
        t *= 0.5;
    }
    // At rounding level the Armijo test cannot be met; a non-increasing full
    // step is still taken.
    let rounding = -slope * t0 < 1e3 * f64::EPSILON * energy.abs().max(1.0);
    Ok(match first {
        Some((cand, e)) if rounding && e <= energy => Some((cand, e)),
        _ => None,
    })
}

/// Solves along a strictly decreasing positive schedule, warm-starting each
/// solve from the previous result.
pub fn continuation_solve(
    u0: &MapField,
    chart: &ConformalChart,
    schedule: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<SolveResult>> {
    for w in schedule.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidSchedule("epsilon schedule must be strictly decreasing".into()));
        }
    }
    if schedule.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidSchedule("epsilon schedule must be positive".into()));
    }
    let ops = Operators::new(u0.grid());
    let mut out: Vec<SolveResult> = Vec::with_capacity(schedule.len());
    for (index, &eps) in schedule.iter().enumerate() {
        let start = out.last().map_or(u0, |r| &r.field);
        let r = minimize_with(&ops, start, eps, chart, opts).map_err(|e| Error::Continuation {
            index,
            source: Box::new(e),
        })?;
        out.push(r);
    }
    Ok(out)
}
