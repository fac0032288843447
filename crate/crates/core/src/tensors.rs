//! Stress-energy tensors of the ε-energy and the radial Pohozaev balance.
//!
//! Tensors are stored per node in Cartesian coordinate components
//! `[xx, xy, yy]`. For the conformal metric `g = e^{2ρ} δ`,
//! `div_g T_β = e^{-2ρ} (∂_α T_{αβ} - ∂_β ρ tr T)`.

use serde::{Deserialize, Serialize};

use crate::calculus::{Operators, Region};
use crate::energy::biharmonic_energy;
use crate::error::{Error, Result};
use crate::geometry::{dot, ConformalChart, MapField};
use crate::sparse::pairwise_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct StressEnergy {
    pub s1: Vec<[f64; 3]>,
    pub s2: Vec<[f64; 3]>,
    pub epsilon: f64,
}

impl StressEnergy {
    /// `S^1 - ε S^2` at `node`.
    pub fn combined(&self, node: usize) -> [f64; 3] {
        let (a, b) = (self.s1[node], self.s2[node]);
        [a[0] - self.epsilon * b[0], a[1] - self.epsilon * b[1], a[2] - self.epsilon * b[2]]
    }
}

fn check(ops: &Operators, chart: &ConformalChart, u: &MapField) -> Result<()> {
    if ops.grid() != u.grid() {
        return Err(Error::ShapeMismatch("field and operators use different grids".into()));
    }
    chart.check(u.grid())?;
    if u.grid().n_r() < 10 {
        return Err(Error::GridTooCoarse(format!(
            "stress-energy needs n_r >= 10, got {}",
            u.grid().n_r()
        )));
    }
    Ok(())
}

fn seg(v: &[f64], n: usize, dim: usize) -> &[f64] {
    &v[n * dim..(n + 1) * dim]
}

pub fn stress_energy(ops: &Operators, chart: &ConformalChart, u: &MapField, eps: f64) -> Result<StressEnergy> {
    check(ops, chart, u)?;
    let dim = u.dim();
    let (ux, uy) = ops.cartesian_gradient(u.values(), dim)?;
    let v = ops.laplacian_conformal(u.values(), dim, chart)?;
    let (vx, vy) = ops.cartesian_gradient(&v, dim)?;
    let m = chart.metric();
    let mut s1 = Vec::with_capacity(u.n_nodes());
    let mut s2 = Vec::with_capacity(u.n_nodes());
    for n in 0..u.n_nodes() {
        let (a, b) = (seg(&ux, n, dim), seg(&uy, n, dim));
        let xx = 0.5 * (dot(b, b) - dot(a, a));
        s1.push([xx, -dot(a, b), -xx]);
        let (p, q) = (seg(&vx, n, dim), seg(&vy, n, dim));
        let vn = seg(&v, n, dim);
        // |Δ_g u|^2 δ_{αβ} carries the metric factor of the coordinate components
        let diag = 0.5 * m[n] * dot(vn, vn) + dot(a, p) + dot(b, q);
        s2.push([
            diag - 2.0 * dot(a, p),
            -dot(a, q) - dot(b, p),
            diag - 2.0 * dot(b, q),
        ]);
    }
    Ok(StressEnergy { s1, s2, epsilon: eps })
}

/// Nodes clear of the nested stencils used by the divergence: four rings
/// from each radial boundary and from the center gap of a disk grid, where
/// the first ring's cell is strongly asymmetric.
fn divergence_interior(ops: &Operators) -> Vec<bool> {
    let g = ops.grid();
    (0..g.n_nodes())
        .map(|n| ops.boundary_distance(n) >= 4 && g.ring_of(n).is_some_and(|(i, _)| !g.includes_disk() || i >= 4))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceDefect {
    /// `|| div_g(S^1 - ε S^2) + <∇u, Δ_g u - ε Δ_g^2 u> ||_{L^2(dx_g)}` on the interior.
    pub defect: f64,
    /// `|| div_g(S^1 - ε S^2) ||` alone.
    pub divergence: f64,
    /// `|| <∇u, Δ_g u - ε Δ_g^2 u> ||` alone.
    pub pairing: f64,
}

impl DivergenceDefect {
    fn from_terms(d: &[f64], v: &[f64], p: &[f64]) -> Self {
        Self {
            defect: pairwise_sum(d).sqrt(),
            divergence: pairwise_sum(v).sqrt(),
            pairing: pairwise_sum(p).sqrt(),
        }
    }
}

pub fn divergence_defect(ops: &Operators, chart: &ConformalChart, u: &MapField, eps: f64) -> Result<DivergenceDefect> {
    divergence_defect_in(ops, chart, u, eps, Region::Full)
}

/// As [`divergence_defect`], restricted to the interior nodes of `region`.
pub fn divergence_defect_in(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    eps: f64,
    region: Region,
) -> Result<DivergenceDefect> {
    let se = stress_energy(ops, chart, u, eps)?;
    let dim = u.dim();
    let nn = u.n_nodes();
    let comp = |k: usize| -> Vec<f64> { (0..nn).map(|n| se.combined(n)[k]).collect() };
    let (txx, txy, tyy) = (comp(0), comp(1), comp(2));
    let (dxx, _) = ops.cartesian_gradient(&txx, 1)?;
    let (dxy_x, dxy_y) = ops.cartesian_gradient(&txy, 1)?;
    let (_, dyy) = ops.cartesian_gradient(&tyy, 1)?;
    let (rx, ry) = ops.cartesian_gradient(chart.rho(), 1)?;
    let (ux, uy) = ops.cartesian_gradient(u.values(), dim)?;
    let lap = ops.laplacian_conformal(u.values(), dim, chart)?;
    let bil = if eps > 0.0 { ops.bilaplacian(u.values(), dim, chart)? } else { vec![0.0; lap.len()] };
    let w = ops.region_weights(region)?;
    let (m, inv) = (chart.metric(), chart.inv_metric());
    let interior = divergence_interior(ops);
    let (mut d_terms, mut v_terms, mut p_terms) = (Vec::new(), Vec::new(), Vec::new());
    let mut e = vec![0.0; dim];
    for n in 0..nn {
        if !interior[n] || w[n] == 0.0 {
            continue;
        }
        let tr = txx[n] + tyy[n];
        let div_x = inv[n] * (dxx[n] + dxy_y[n] - rx[n] * tr);
        let div_y = inv[n] * (dxy_x[n] + dyy[n] - ry[n] * tr);
        for k in 0..dim {
            e[k] = lap[n * dim + k] - eps * bil[n * dim + k];
        }
        // components in the g-orthonormal frame
        let s = (-chart.rho()[n]).exp();
        let px = dot(seg(&ux, n, dim), &e);
        let py = dot(seg(&uy, n, dim), &e);
        let dv = m[n] * w[n];
        d_terms.push(dv * s * s * ((div_x + px).powi(2) + (div_y + py).powi(2)));
        v_terms.push(dv * s * s * (div_x.powi(2) + div_y.powi(2)));
        p_terms.push(dv * s * s * (px.powi(2) + py.powi(2)));
    }
    Ok(DivergenceDefect::from_terms(&d_terms, &v_terms, &p_terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevBalance {
    /// Radius actually used (snapped to a ring).
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// `(2ε/t) ∫_{B_t} e^{-2ρ}|Δu|^2 dx`.
    pub ball_term: f64,
    /// `-2ε ∫_{∂B_t} (...) dS`.
    pub boundary_term: f64,
}

/// Both sides of the radial balance on the circle `∂B_t`:
/// `∫(|u_r|^2 - |u_θ|^2/t^2) = (2ε/t)∫_{B_t} e^{-2ρ}|Δu|^2
///  - 2ε ∫_{∂B_t} (½ e^{-2ρ}|Δu|^2 + <∇u, ∇(e^{-2ρ}Δu)> - 2 <u_r, ∂_r(e^{-2ρ}Δu)>)`.
pub fn pohozaev_balance(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    eps: f64,
    t: f64,
) -> Result<PohozaevBalance> {
    check(ops, chart, u)?;
    let g = ops.grid();
    let ring = g
        .snap(t)?
        .ok_or_else(|| Error::RegionOutOfRange(format!("radius {t} snaps to the center")))?;
    if ops.boundary_distance(g.node(ring, 0)) < 3 {
        return Err(Error::RegionOutOfRange(format!(
            "radius {t} is within three rings of the grid boundary"
        )));
    }
    let dim = u.dim();
    let gu = ops.gradient(u.values(), dim)?;
    let lhs_f: Vec<f64> = (0..u.n_nodes())
        .map(|n| dot(seg(&gu.radial, n, dim), seg(&gu.radial, n, dim)) - dot(seg(&gu.tangential, n, dim), seg(&gu.tangential, n, dim)))
        .collect();
    let (lhs, ts) = ops.boundary_integral(&lhs_f, t)?;
    let (ball_term, boundary_term) = if eps > 0.0 {
        let v = ops.laplacian_conformal(u.values(), dim, chart)?;
        let gv = ops.gradient(&v, dim)?;
        let m = chart.metric();
        let f: Vec<f64> = (0..u.n_nodes())
            .map(|n| {
                let (ur, ut) = (seg(&gu.radial, n, dim), seg(&gu.tangential, n, dim));
                let (vr, vt) = (seg(&gv.radial, n, dim), seg(&gv.tangential, n, dim));
                let vn = seg(&v, n, dim);
                0.5 * m[n] * dot(vn, vn) + dot(ur, vr) + dot(ut, vt) - 2.0 * dot(ur, vr)
            })
            .collect();
        let (bi, _) = ops.boundary_integral(&f, t)?;
        let ball = biharmonic_energy(ops, chart, u, Region::Ball(ts))?;
        (2.0 * eps / ts * ball, -2.0 * eps * bi)
    } else {
        (0.0, 0.0)
    };
    let rhs = ball_term + boundary_term;
    Ok(PohozaevBalance {
        t: ts,
        lhs,
        rhs,
        gap: lhs - rhs,
        ball_term,
        boundary_term,
    })
}

/// `∫_region (1/r^2)|∂_θ u|^2 dx` (flat measure).
pub fn tangential_energy(ops: &Operators, u: &MapField, region: Region) -> Result<f64> {
    let gu = ops.gradient(u.values(), u.dim())?;
    let w = ops.region_weights(region)?;
    let ts = gu.tangential_sq();
    let terms: Vec<f64> = (0..u.n_nodes()).map(|n| w[n] * ts[n]).collect();
    Ok(pairwise_sum(&terms))
}

/// `∫_region |∂_r u|^2 dx` (flat measure).
pub fn radial_energy(ops: &Operators, u: &MapField, region: Region) -> Result<f64> {
    let gu = ops.gradient(u.values(), u.dim())?;
    let w = ops.region_weights(region)?;
    let rs = gu.radial_sq();
    let terms: Vec<f64> = (0..u.n_nodes()).map(|n| w[n] * rs[n]).collect();
    Ok(pairwise_sum(&terms))
}
