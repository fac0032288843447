//! Dirichlet, biharmonic, ε- and α-energies and the first variation of the
//! ε-energy.
//!
//! The discrete Dirichlet energy is the finite-volume form whose stiffness
//! defines the interior Laplacian, so its gradient is exactly `-2 W Δu` on
//! finite-volume rows. The biharmonic term is `Σ_n W_n e^{-2ρ_n} |Δu|_n^2`; its
//! gradient is assembled with the transposed Laplacian.

use serde::{Deserialize, Serialize};

use crate::calculus::{Operators, Region, SnappedRegion};
use crate::error::{Error, Result};
use crate::geometry::{dot, tangent_project_in_place, ConformalChart, MapField};
use crate::sparse::pairwise_sum;

/// Energies of one field on one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dirichlet: f64,
    pub biharmonic: f64,
    pub epsilon: f64,
    pub epsilon_total: f64,
    pub alpha_total: Option<f64>,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Estimated Dirichlet energy beyond the outer radius, `π c / R^2` with
    /// `c = R^4 |∇u|^2` on the outer ring.
    pub dirichlet_tail: f64,
    /// Estimated biharmonic energy beyond the outer radius, `π c / (3 R^6)`.
    pub biharmonic_tail: f64,
}

fn check(ops: &Operators, chart: &ConformalChart, u: &MapField) -> Result<()> {
    if ops.grid() != u.grid() {
        return Err(Error::ShapeMismatch("field and operators use different grids".into()));
    }
    chart.check(u.grid())
}

/// Squared distance between the values of two nodes.
fn dist_sq(v: &[f64], dim: usize, a: usize, b: usize) -> f64 {
    (0..dim).map(|k| (v[a * dim + k] - v[b * dim + k]).powi(2)).sum()
}

/// `Σ_j <u_j, -(D2 u)_j>` on a ring (non-negative).
fn ring_angular(ops: &Operators, u: &MapField, ring: usize) -> f64 {
    let g = ops.grid();
    let nt = g.n_theta();
    let d2 = ops.d2_kernel();
    let dim = u.dim();
    let vals = u.values();
    let mut terms = Vec::with_capacity(nt);
    for j in 0..nt {
        let nj = g.node(ring, j);
        let mut acc = 0.0;
        for m in 0..nt {
            if m == j {
                continue;
            }
            let k = (j + nt - m) % nt;
            let nm = g.node(ring, m);
            // -(D2 u)_j = -Σ_m d2[k] (u_m - u_j) since rows sum to zero
            let mut diff_dot = 0.0;
            for c in 0..dim {
                diff_dot += (vals[nm * dim + c] - vals[nj * dim + c]) * vals[nj * dim + c];
            }
            acc -= d2[k] * diff_dot;
        }
        terms.push(acc);
    }
    pairwise_sum(&terms)
}

fn dirichlet_on(ops: &Operators, u: &MapField, s: &SnappedRegion) -> f64 {
    let g = ops.grid();
    let Some((a, b)) = s.rings else { return 0.0 };
    let w = ops.snapped_weights(s);
    let edges = ops.edges();
    let ang = ops.angular_coefficients();
    let dim = u.dim();
    let v = u.values();
    let mut terms = Vec::new();
    for i in a..=b {
        let inner_edge = if i == 0 { s.center && g.includes_disk() } else { i > a };
        if inner_edge {
            let ring: Vec<f64> = (0..g.n_theta())
                .map(|j| {
                    let n = g.node(i, j);
                    let m = if i == 0 { 0 } else { g.node(i - 1, j) };
                    dist_sq(v, dim, n, m)
                })
                .collect();
            terms.push(edges[i] * pairwise_sum(&ring));
        }
        let wi = w[g.node(i, 0)];
        if wi > 0.0 {
            terms.push(wi * ang[i] * ring_angular(ops, u, i));
        }
    }
    pairwise_sum(&terms)
}

/// `∫_region |∇u|^2 dx` (flat; equal to the metric value by conformal invariance).
pub fn dirichlet_energy(ops: &Operators, u: &MapField, region: Region) -> Result<f64> {
    if ops.grid() != u.grid() {
        return Err(Error::ShapeMismatch("field and operators use different grids".into()));
    }
    let s = ops.snap_region(region)?;
    Ok(dirichlet_on(ops, u, &s))
}

/// `∫_region |∇^g u|^2_g dx_g`, evaluated with the metric factors explicit.
pub fn dirichlet_energy_metric(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    region: Region,
) -> Result<f64> {
    check(ops, chart, u)?;
    let s = ops.snap_region(region)?;
    let g = ops.grid();
    let Some((a, b)) = s.rings else { return Ok(0.0) };
    let w = ops.snapped_weights(&s);
    let (edges, ang) = (ops.edges(), ops.angular_coefficients());
    let (rho, dim, v) = (chart.rho(), u.dim(), u.values());
    let mut terms = Vec::new();
    for i in a..=b {
        let inner_edge = if i == 0 { s.center && g.includes_disk() } else { i > a };
        for j in 0..g.n_theta() {
            let n = g.node(i, j);
            if inner_edge {
                let m = if i == 0 { 0 } else { g.node(i - 1, j) };
                // |∇^g u|^2 = e^{-2ρ}|∇u|^2 and dx_g = e^{2ρ} dx, at the edge midpoint
                let rm = 0.5 * (rho[n] + rho[m]);
                terms.push(edges[i] * (-2.0 * rm).exp() * dist_sq(v, dim, n, m) * (2.0 * rm).exp());
            }
        }
        let wi = w[g.node(i, 0)];
        if wi > 0.0 {
            let r = rho[g.node(i, 0)];
            terms.push(wi * (2.0 * r).exp() * ang[i] * (-2.0 * r).exp() * ring_angular(ops, u, i));
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Nodal `|∇u|^2` from the finite-difference gradient.
pub fn gradient_density(ops: &Operators, u: &MapField) -> Result<Vec<f64>> {
    Ok(ops.gradient(u.values(), u.dim())?.norm_sq)
}

/// `|Δu|^2` per node (flat Laplacian).
fn laplacian_sq(ops: &Operators, u: &MapField) -> Result<Vec<f64>> {
    let lap = ops.laplacian_flat(u.values(), u.dim())?;
    Ok(lap.chunks(u.dim()).map(|c| dot(c, c)).collect())
}

/// `∫_region e^{-2ρ}|Δu|^2 dx = ∫_region |Δ_g u|^2 dx_g`.
pub fn biharmonic_energy(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    region: Region,
) -> Result<f64> {
    check(ops, chart, u)?;
    let w = ops.region_weights(region)?;
    let l2 = laplacian_sq(ops, u)?;
    let inv = chart.inv_metric();
    let terms: Vec<f64> = (0..w.len()).map(|n| w[n] * inv[n] * l2[n]).collect();
    Ok(pairwise_sum(&terms))
}

fn outer_ring_mean(ops: &Operators, f: &[f64], ring: usize) -> f64 {
    let vals: Vec<f64> = ops.grid().ring_nodes(ring).map(|n| f[n]).collect();
    pairwise_sum(&vals) / vals.len() as f64
}

/// Full ε-energy report on a region.
pub fn epsilon_energy(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    eps: f64,
    region: Region,
) -> Result<EnergyReport> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidOptions(format!("epsilon must be >= 0, got {eps}")));
    }
    check(ops, chart, u)?;
    let s = ops.snap_region(region)?;
    let dirichlet = dirichlet_on(ops, u, &s);
    let biharmonic = biharmonic_energy(ops, chart, u, region)?;
    let (dirichlet_tail, biharmonic_tail) = match s.rings {
        Some((_, b)) if s.outer_radius > 0.0 => {
            let radius = s.outer_radius;
            let d = outer_ring_mean(ops, &gradient_density(ops, u)?, b) * radius.powi(4);
            let l = outer_ring_mean(ops, &laplacian_sq(ops, u)?, b) * radius.powi(8);
            (
                std::f64::consts::PI * d / radius.powi(2),
                std::f64::consts::PI * l / (3.0 * radius.powi(6)),
            )
        }
        _ => (0.0, 0.0),
    };
    Ok(EnergyReport {
        dirichlet,
        biharmonic,
        epsilon: eps,
        epsilon_total: dirichlet + eps * biharmonic,
        alpha_total: None,
        inner_radius: s.inner_radius,
        outer_radius: s.outer_radius,
        dirichlet_tail,
        biharmonic_tail,
    })
}

/// Full-grid `E_ε` without the report bookkeeping.
pub fn epsilon_total(ops: &Operators, chart: &ConformalChart, u: &MapField, eps: f64) -> Result<f64> {
    check(ops, chart, u)?;
    let s = ops.snap_region(Region::Full)?;
    let d = dirichlet_on(ops, u, &s);
    if eps == 0.0 {
        return Ok(d);
    }
    Ok(d + eps * biharmonic_energy(ops, chart, u, Region::Full)?)
}

/// Sacks–Uhlenbeck energy `∫_region (1 + |∇u|^2)^α dx_g`.
pub fn alpha_energy(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    alpha: f64,
    region: Region,
) -> Result<f64> {
    if !(alpha >= 1.0) {
        return Err(Error::InvalidOptions(format!("alpha must be >= 1, got {alpha}")));
    }
    check(ops, chart, u)?;
    let w = ops.region_weights(region)?;
    let d = gradient_density(ops, u)?;
    let m = chart.metric();
    let terms: Vec<f64> = (0..w.len())
        .map(|n| w[n] * m[n] * (1.0 + d[n]).powf(alpha))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Nodes where the residual is evaluated: four rings clear of every radial
/// boundary (the one-sided boundary Laplacian reaches three rings inward).
pub fn residual_interior(ops: &Operators) -> Vec<bool> {
    (0..ops.grid().n_nodes())
        .map(|n| ops.boundary_distance(n) >= 4)
        .collect()
}

/// Tangent residual of the ε-harmonic map equation.
#[derive(Debug, Clone)]
pub struct Residual {
    /// `(Δ_g u - ε Δ_g^2 u)^T` per node; zero outside the interior.
    pub field: Vec<f64>,
    /// `sqrt(∫_interior |R|^2 dx_g)`.
    pub norm: f64,
}

pub fn el_residual(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    eps: f64,
) -> Result<Residual> {
    check(ops, chart, u)?;
    if ops.grid().n_r() < 10 {
        return Err(Error::GridTooCoarse(format!(
            "residual needs n_r >= 10, got {}",
            ops.grid().n_r()
        )));
    }
    let dim = u.dim();
    let lap = ops.laplacian_conformal(u.values(), dim, chart)?;
    let bil = if eps > 0.0 {
        ops.bilaplacian(u.values(), dim, chart)?
    } else {
        vec![0.0; lap.len()]
    };
    let interior = residual_interior(ops);
    let mut field = vec![0.0; lap.len()];
    let w = ops.weights();
    let m = chart.metric();
    let mut terms = Vec::new();
    for n in 0..u.n_nodes() {
        if !interior[n] {
            continue;
        }
        let r = &mut field[n * dim..(n + 1) * dim];
        for k in 0..dim {
            r[k] = lap[n * dim + k] - eps * bil[n * dim + k];
        }
        tangent_project_in_place(u.value(n), r);
        terms.push(w[n] * m[n] * dot(r, r));
    }
    Ok(Residual {
        field,
        norm: pairwise_sum(&terms).sqrt(),
    })
}

/// Partial derivatives `∂E_ε/∂u_n` of the full-grid ε-energy (ambient, not projected).
pub fn energy_partials(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    eps: f64,
) -> Result<Vec<f64>> {
    check(ops, chart, u)?;
    let g = ops.grid();
    let dim = u.dim();
    let v = u.values();
    let nt = g.n_theta();
    let (edges, ang, d2, w) = (ops.edges(), ops.angular_coefficients(), ops.d2_kernel(), ops.weights());
    let mut out = vec![0.0; v.len()];
    for i in 0..g.n_r() {
        for j in 0..nt {
            let n = g.node(i, j);
            if edges[i] > 0.0 {
                let m = if i == 0 { 0 } else { g.node(i - 1, j) };
                for k in 0..dim {
                    let d = 2.0 * edges[i] * (v[n * dim + k] - v[m * dim + k]);
                    out[n * dim + k] += d;
                    out[m * dim + k] -= d;
                }
            }
            // angular: 2 w a (-D2 u)_n
            let c = 2.0 * w[n] * ang[i];
            for mm in 0..nt {
                if mm == j {
                    continue;
                }
                let kk = (j + nt - mm) % nt;
                let nm = g.node(i, mm);
                for k in 0..dim {
                    out[n * dim + k] -= c * d2[kk] * (v[nm * dim + k] - v[n * dim + k]);
                }
            }
        }
    }
    if eps > 0.0 {
        let mut lap = ops.laplacian_flat(v, dim)?;
        let inv = chart.inv_metric();
        for n in 0..g.n_nodes() {
            let s = 2.0 * eps * w[n] * inv[n];
            lap[n * dim..(n + 1) * dim].iter_mut().for_each(|x| *x *= s);
        }
        let bt = ops.lap_matrix().apply_transpose(&lap, dim);
        out.iter_mut().zip(bt).for_each(|(o, b)| *o += b);
    }
    Ok(out)
}

/// Tangent `L^2(dx_g)` gradient of the full-grid ε-energy; `pinned` nodes get zero.
pub fn energy_gradient(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    eps: f64,
    pinned: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let mut p = energy_partials(ops, chart, u, eps)?;
    let dim = u.dim();
    let w = ops.weights();
    let m = chart.metric();
    for n in 0..u.n_nodes() {
        let gn = &mut p[n * dim..(n + 1) * dim];
        if pinned.is_some_and(|pin| pin[n]) {
            gn.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let s = 1.0 / (w[n] * m[n]);
        gn.iter_mut().for_each(|x| *x *= s);
        tangent_project_in_place(u.value(n), gn);
    }
    Ok(p)
}

/// `L^2(dx_g)` inner product of two node-major vector fields.
pub fn inner(ops: &Operators, chart: &ConformalChart, a: &[f64], b: &[f64], dim: usize) -> f64 {
    let w = ops.weights();
    let m = chart.metric();
    let terms: Vec<f64> = (0..w.len())
        .map(|n| w[n] * m[n] * dot(&a[n * dim..(n + 1) * dim], &b[n * dim..(n + 1) * dim]))
        .collect();
    pairwise_sum(&terms)
}

/// Retraction `proj(u + t δ)`.
pub fn retract(u: &MapField, delta: &[f64], t: f64) -> Result<MapField> {
    let v: Vec<f64> = u.values().iter().zip(delta).map(|(a, d)| a + t * d).collect();
    MapField::new(u.grid().clone(), u.dim(), v)
}
