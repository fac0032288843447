//! Discrete differential operators and quadrature on polar grids.
//!
//! Radial derivatives use three-point (interior) and one-sided (boundary ring)
//! stencils on the log-spaced rings; angular derivatives are Fourier-exact on
//! each ring. The Laplacian at interior rings and at the center node is the
//! finite-volume operator `L = -W^{-1} K`, where `K` is the stiffness of the
//! discrete Dirichlet energy and `W` the dual-cell areas. The discrete energy
//! gradient and the Laplacian are therefore exactly compatible.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{ConformalChart, MapField, PolarGrid};
use crate::sparse::{pairwise_sum, CsrMatrix};

/// Finite-difference weights for derivatives `0..=m` at `z` from nodes `x`.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// First and second Fourier differentiation kernels on `n` equispaced angles.
/// `(D u)_j = sum_m kernel[(j - m) mod n] u_m`.
fn fourier_kernels(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 * PI / n as f64;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    d2[0] = -PI * PI / (3.0 * h * h) - 1.0 / 6.0;
    for k in 1..n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let half = 0.5 * k as f64 * h;
        d1[k] = 0.5 * sign / half.tan();
        d2[k] = -0.5 * sign / (half.sin() * half.sin());
    }
    (d1, d2)
}

/// Integration region; radii are snapped to rings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Full,
    Ball(f64),
    Annulus(f64, f64),
}

/// A region resolved against a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnappedRegion {
    pub center: bool,
    /// First and last ring, inclusive. `None` when only the center is covered.
    pub rings: Option<(usize, usize)>,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

/// Precomputed stencils for one grid.
#[derive(Debug, Clone)]
pub struct Operators {
    grid: PolarGrid,
    /// `d/dr` at ring nodes, `d/dx` at the center.
    grad_r: CsrMatrix,
    /// `(1/r) d/dtheta` at ring nodes, `d/dy` at the center.
    grad_t: CsrMatrix,
    lap: CsrMatrix,
    /// Dual-cell boundaries: `half[i]` is the inner edge of ring `i`'s cell,
    /// `half[n_r]` the outer edge of the last ring.
    half: Vec<f64>,
    /// Radial edge conductances; `edge[i]` joins ring `i-1` (or the center for
    /// `i = 0`) and ring `i`. `edge[0]` is zero on annulus grids.
    edge: Vec<f64>,
    /// Angular coefficient approximating `1/r^2` on each ring.
    ang: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    weights: Vec<f64>,
}

impl Operators {
    pub fn new(grid: &PolarGrid) -> Self {
        let nr = grid.n_r();
        let nt = grid.n_theta();
        let r = grid.radii();
        let dth = grid.dtheta();
        let disk = grid.includes_disk();
        let (d1, d2) = fourier_kernels(nt);

        let mut half = vec![0.0; nr + 1];
        half[0] = if disk { 0.5 * r[0] } else { r[0] };
        for i in 1..nr {
            half[i] = 0.5 * (r[i - 1] + r[i]);
        }
        half[nr] = r[nr - 1];
        let mut edge = vec![0.0; nr];
        if disk {
            edge[0] = dth * half[0] / r[0];
        }
        for i in 1..nr {
            edge[i] = dth * half[i] / (r[i] - r[i - 1]);
        }
        let ang: Vec<f64> = (0..nr)
            .map(|i| 1.0 / (r[i] * 0.5 * (half[i] + half[i + 1])))
            .collect();
        let mut weights = vec![0.0; grid.n_nodes()];
        if let Some(c) = grid.center() {
            weights[c] = PI * half[0] * half[0];
        }
        for i in 0..nr {
            let w = 0.5 * dth * (half[i + 1].powi(2) - half[i].powi(2));
            for n in grid.ring_nodes(i) {
                weights[n] = w;
            }
        }

        let nn = grid.n_nodes();
        let mut grad_r = vec![Vec::new(); nn];
        let mut grad_t = vec![Vec::new(); nn];
        let mut lap = vec![Vec::new(); nn];

        if let Some(c) = grid.center() {
            let s = 2.0 / (nt as f64 * r[0]);
            for j in 0..nt {
                let th = grid.theta(j);
                grad_r[c].push((grid.node(0, j), s * th.cos()));
                grad_t[c].push((grid.node(0, j), s * th.sin()));
                let w = edge[0] / weights[c];
                lap[c].push((grid.node(0, j), w));
                lap[c].push((c, -w));
            }
        }

        for i in 0..nr {
            let boundary = i == nr - 1 || (i == 0 && !disk);
            // radial stencil nodes (radius, ring or center marker)
            let pts: Vec<(f64, Option<usize>)> = if !boundary {
                if i == 0 {
                    vec![(0.0, None), (r[0], Some(0)), (r[1], Some(1))]
                } else {
                    vec![(r[i - 1], Some(i - 1)), (r[i], Some(i)), (r[i + 1], Some(i + 1))]
                }
            } else if i == 0 {
                (0..4).map(|k| (r[k], Some(k))).collect()
            } else {
                (nr - 4..nr).map(|k| (r[k], Some(k))).collect()
            };
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let w3 = if boundary {
                let sub: Vec<f64> = if i == 0 { xs[..3].to_vec() } else { xs[1..].to_vec() };
                let w = fd_weights(r[i], &sub, 1);
                let mut full = vec![0.0; 4];
                let off = if i == 0 { 0 } else { 1 };
                full[off..off + 3].copy_from_slice(&w[1][..3]);
                full
            } else {
                fd_weights(r[i], &xs, 1)[1].clone()
            };
            let w_dd = if boundary { fd_weights(r[i], &xs, 2)[2].clone() } else { Vec::new() };

            for j in 0..nt {
                let n = grid.node(i, j);
                let col = |p: &(f64, Option<usize>)| match p.1 {
                    Some(k) => grid.node(k, j),
                    None => 0,
                };
                for (p, w) in pts.iter().zip(&w3) {
                    grad_r[n].push((col(p), *w));
                }
                for m in 0..nt {
                    let k = (j + nt - m) % nt;
                    if d1[k] != 0.0 {
                        grad_t[n].push((grid.node(i, m), d1[k] / r[i]));
                    }
                }
                if boundary {
                    for (p, (wd, wdd)) in pts.iter().zip(w3.iter().zip(&w_dd)) {
                        lap[n].push((col(p), wdd + wd / r[i]));
                    }
                    for m in 0..nt {
                        let k = (j + nt - m) % nt;
                        lap[n].push((grid.node(i, m), d2[k] / (r[i] * r[i])));
                    }
                } else {
                    let wn = weights[n];
                    let inner = if i == 0 { 0 } else { grid.node(i - 1, j) };
                    lap[n].push((inner, edge[i] / wn));
                    lap[n].push((grid.node(i + 1, j), edge[i + 1] / wn));
                    lap[n].push((n, -(edge[i] + edge[i + 1]) / wn));
                    for m in 0..nt {
                        let k = (j + nt - m) % nt;
                        lap[n].push((grid.node(i, m), ang[i] * d2[k]));
                    }
                }
            }
        }

        Self {
            grid: grid.clone(),
            grad_r: CsrMatrix::from_rows(grad_r),
            grad_t: CsrMatrix::from_rows(grad_t),
            lap: CsrMatrix::from_rows(lap).with_zero_row_sums(),
            half,
            edge,
            ang,
            d1,
            d2,
            weights,
        }
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }
    /// Dual-cell areas of the full grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn lap_matrix(&self) -> &CsrMatrix {
        &self.lap
    }
    pub fn grad_r_matrix(&self) -> &CsrMatrix {
        &self.grad_r
    }
    pub fn grad_t_matrix(&self) -> &CsrMatrix {
        &self.grad_t
    }
    pub(crate) fn edges(&self) -> &[f64] {
        &self.edge
    }
    pub(crate) fn angular_coefficients(&self) -> &[f64] {
        &self.ang
    }
    pub(crate) fn d2_kernel(&self) -> &[f64] {
        &self.d2
    }
    pub fn d1_kernel(&self) -> &[f64] {
        &self.d1
    }

    /// True when the Laplacian row at `node` is the finite-volume row.
    pub fn is_interior(&self, node: usize) -> bool {
        match self.grid.ring_of(node) {
            None => true,
            Some((i, _)) => {
                i != self.grid.n_r() - 1 && !(i == 0 && !self.grid.includes_disk())
            }
        }
    }

    /// Number of rings between `node` and the nearest radial boundary ring.
    pub fn boundary_distance(&self, node: usize) -> usize {
        let nr = self.grid.n_r();
        match self.grid.ring_of(node) {
            None => usize::MAX,
            Some((i, _)) => {
                let outer = nr - 1 - i;
                if self.grid.includes_disk() {
                    outer
                } else {
                    outer.min(i)
                }
            }
        }
    }

    pub fn snap_region(&self, region: Region) -> Result<SnappedRegion> {
        let g = &self.grid;
        let ring_r = |s: Option<usize>| s.map_or(0.0, |i| g.radius(i));
        match region {
            Region::Full => Ok(SnappedRegion {
                center: g.includes_disk(),
                rings: Some((0, g.n_r() - 1)),
                inner_radius: g.r_min(),
                outer_radius: g.r_max(),
            }),
            Region::Ball(t) => {
                if !g.includes_disk() {
                    return Err(Error::RegionOutOfRange(
                        "ball regions need a disk grid".into(),
                    ));
                }
                let s = g.snap(t)?;
                Ok(SnappedRegion {
                    center: true,
                    rings: s.map(|b| (0, b)),
                    inner_radius: 0.0,
                    outer_radius: ring_r(s),
                })
            }
            Region::Annulus(p, q) => {
                if !(p <= q) {
                    return Err(Error::RegionOutOfRange(format!("annulus ({p}, {q})")));
                }
                let a = g.snap(p)?;
                let b = g.snap(q)?;
                match (a, b) {
                    (_, None) => Ok(SnappedRegion {
                        center: false,
                        rings: None,
                        inner_radius: 0.0,
                        outer_radius: 0.0,
                    }),
                    (None, Some(b)) => Ok(SnappedRegion {
                        center: true,
                        rings: Some((0, b)),
                        inner_radius: 0.0,
                        outer_radius: g.radius(b),
                    }),
                    (Some(a), Some(b)) => Ok(SnappedRegion {
                        center: false,
                        rings: Some((a, b)),
                        inner_radius: g.radius(a),
                        outer_radius: g.radius(b),
                    }),
                }
            }
        }
    }

    /// Quadrature weights of the nodes inside `region` (zero elsewhere).
    pub fn region_weights(&self, region: Region) -> Result<Vec<f64>> {
        let s = self.snap_region(region)?;
        Ok(self.snapped_weights(&s))
    }

    pub(crate) fn snapped_weights(&self, s: &SnappedRegion) -> Vec<f64> {
        let g = &self.grid;
        let mut w = vec![0.0; g.n_nodes()];
        let dth = g.dtheta();
        if s.center {
            if let Some(c) = g.center() {
                w[c] = self.weights[c];
            }
        }
        if let Some((a, b)) = s.rings {
            for i in a..=b {
                let lo = if i == a && !s.center { g.radius(i) } else { self.half[i] };
                let hi = if i == b { g.radius(i) } else { self.half[i + 1] };
                let lo = lo.max(self.half[i]);
                let hi = hi.min(self.half[i + 1]);
                let wi = 0.5 * dth * (hi * hi - lo * lo).max(0.0);
                for n in g.ring_nodes(i) {
                    w[n] = wi;
                }
            }
        }
        w
    }

    fn check(&self, len: usize, dim: usize) -> Result<()> {
        if len != self.grid.n_nodes() * dim {
            return Err(Error::ShapeMismatch(format!(
                "field of length {len} on a grid of {} nodes (dim {dim})",
                self.grid.n_nodes()
            )));
        }
        Ok(())
    }

    /// Radial and tangential derivative components and `|grad f|^2` per node.
    pub fn gradient(&self, f: &[f64], dim: usize) -> Result<Gradient> {
        self.check(f.len(), dim)?;
        let radial = self.grad_r.apply(f, dim);
        let tangential = self.grad_t.apply(f, dim);
        let norm_sq = radial
            .chunks(dim)
            .zip(tangential.chunks(dim))
            .map(|(a, b)| a.iter().map(|x| x * x).sum::<f64>() + b.iter().map(|x| x * x).sum::<f64>())
            .collect();
        Ok(Gradient {
            dim,
            radial,
            tangential,
            norm_sq,
        })
    }

    /// Cartesian partial derivatives `(d/dx, d/dy)` per node.
    pub fn cartesian_gradient(&self, f: &[f64], dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.gradient(f, dim)?;
        let mut dx = vec![0.0; f.len()];
        let mut dy = vec![0.0; f.len()];
        for n in 0..self.grid.n_nodes() {
            let (_, th) = self.grid.polar(n);
            let (c, s) = if self.grid.ring_of(n).is_none() { (1.0, 0.0) } else { (th.cos(), th.sin()) };
            for k in 0..dim {
                let a = g.radial[n * dim + k];
                let b = g.tangential[n * dim + k];
                if self.grid.ring_of(n).is_none() {
                    dx[n * dim + k] = a;
                    dy[n * dim + k] = b;
                } else {
                    dx[n * dim + k] = c * a - s * b;
                    dy[n * dim + k] = s * a + c * b;
                }
            }
        }
        Ok((dx, dy))
    }

    /// Flat Laplacian `Δf`.
    pub fn laplacian_flat(&self, f: &[f64], dim: usize) -> Result<Vec<f64>> {
        self.check(f.len(), dim)?;
        Ok(self.lap.apply_differences(f, dim))
    }

    /// `Δ_g f = e^{-2 rho} Δ f`.
    pub fn laplacian_conformal(
        &self,
        f: &[f64],
        dim: usize,
        chart: &ConformalChart,
    ) -> Result<Vec<f64>> {
        chart.check(&self.grid)?;
        let mut out = self.laplacian_flat(f, dim)?;
        scale_nodes(&mut out, dim, &chart.inv_metric());
        Ok(out)
    }

    pub fn laplacian(
        &self,
        f: &[f64],
        dim: usize,
        chart: &ConformalChart,
        mode: LaplacianMode,
    ) -> Result<Vec<f64>> {
        match mode {
            LaplacianMode::Flat => self.laplacian_flat(f, dim),
            LaplacianMode::Conformal => self.laplacian_conformal(f, dim, chart),
        }
    }

    /// `Δ_g (Δ_g f)`.
    pub fn bilaplacian(&self, f: &[f64], dim: usize, chart: &ConformalChart) -> Result<Vec<f64>> {
        if self.grid.n_r() < 8 {
            return Err(Error::GridTooCoarse(format!(
                "bilaplacian needs n_r >= 8, got {}",
                self.grid.n_r()
            )));
        }
        let inner = self.laplacian_conformal(f, dim, chart)?;
        self.laplacian_conformal(&inner, dim, chart)
    }

    /// `∫_region f dx` (flat) or `∫_region f dx_g` (conformal).
    pub fn integrate(
        &self,
        f: &[f64],
        region: Region,
        measure: Measure,
        chart: &ConformalChart,
    ) -> Result<f64> {
        self.check(f.len(), 1)?;
        let w = self.region_weights(region)?;
        let terms: Vec<f64> = match measure {
            Measure::Flat => w.iter().zip(f).map(|(a, b)| a * b).collect(),
            Measure::Conformal => {
                chart.check(&self.grid)?;
                w.iter()
                    .zip(f)
                    .zip(chart.metric())
                    .map(|((a, b), m)| a * b * m)
                    .collect()
            }
        };
        Ok(pairwise_sum(&terms))
    }

    /// `∫_{∂B_t} f ds` on the ring nearest `t`; returns `(value, snapped t)`.
    pub fn boundary_integral(&self, f: &[f64], t: f64) -> Result<(f64, f64)> {
        self.check(f.len(), 1)?;
        let ring = self.grid.snap(t)?.ok_or_else(|| {
            Error::RegionOutOfRange(format!("circle of radius {t} snaps to the center node"))
        })?;
        let ts = self.grid.radius(ring);
        let vals: Vec<f64> = self.grid.ring_nodes(ring).map(|n| f[n]).collect();
        Ok((ts * self.grid.dtheta() * pairwise_sum(&vals), ts))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianMode {
    Flat,
    Conformal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Flat,
    Conformal,
}

/// Per-node derivative components of a (vector) field.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub dim: usize,
    /// `∂_r f` (`∂_x f` at the center).
    pub radial: Vec<f64>,
    /// `(1/r) ∂_θ f` (`∂_y f` at the center).
    pub tangential: Vec<f64>,
    pub norm_sq: Vec<f64>,
}

impl Gradient {
    pub fn radial_sq(&self) -> Vec<f64> {
        self.radial.chunks(self.dim).map(|a| a.iter().map(|x| x * x).sum()).collect()
    }
    pub fn tangential_sq(&self) -> Vec<f64> {
        self.tangential.chunks(self.dim).map(|a| a.iter().map(|x| x * x).sum()).collect()
    }
}

pub(crate) fn scale_nodes(f: &mut [f64], dim: usize, s: &[f64]) {
    for (chunk, si) in f.chunks_mut(dim).zip(s) {
        chunk.iter_mut().for_each(|x| *x *= si);
    }
}

/// Convenience for a map field.
pub fn map_gradient(ops: &Operators, u: &MapField) -> Result<Gradient> {
    ops.gradient(u.values(), u.dim())
}
