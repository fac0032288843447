//! Charts, polar grids and the round sphere target `S^n ⊂ R^l`.
//!
//! Nodes are stored node-major: the optional center node first, then ring by
//! ring (radial outer), `n_theta` angular nodes per ring (angular inner).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Radial node layout of a [`PolarGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    r_min: f64,
    r_max: f64,
    n_r: usize,
    n_theta: usize,
    includes_disk: bool,
    radii: Vec<f64>,
}

impl PolarGrid {
    /// Disk grid: a center node at the origin plus `n_r` log-spaced rings from
    /// `r_first` to `r_max`.
    pub fn disk(r_first: f64, r_max: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if !(r_first > 0.0 && r_first < r_max) {
            return Err(Error::InvalidGrid(format!(
                "r_first must satisfy 0 < r_first < r_max (r_first = {r_first}, r_max = {r_max})"
            )));
        }
        Self::build(0.0, r_first, r_max, n_r, n_theta, true)
    }

    /// Annulus grid: `n_r` log-spaced rings from `r_min > 0` to `r_max`.
    pub fn annulus(r_min: f64, r_max: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < r_max) {
            return Err(Error::InvalidGrid(format!(
                "annulus needs 0 < r_min < r_max (r_min = {r_min}, r_max = {r_max})"
            )));
        }
        Self::build(r_min, r_min, r_max, n_r, n_theta, false)
    }

    fn build(
        r_min: f64,
        r_first: f64,
        r_max: f64,
        n_r: usize,
        n_theta: usize,
        includes_disk: bool,
    ) -> Result<Self> {
        if !r_max.is_finite() {
            return Err(Error::InvalidGrid("r_max must be finite".into()));
        }
        if n_r < 4 {
            return Err(Error::InvalidGrid(format!("n_r must be >= 4, got {n_r}")));
        }
        if n_theta < 8 || !n_theta.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_theta must be even and >= 8, got {n_theta}"
            )));
        }
        let h = (r_max / r_first).ln() / (n_r - 1) as f64;
        let mut radii: Vec<f64> = (0..n_r)
            .map(|i| r_first * (h * i as f64).exp())
            .collect();
        radii[n_r - 1] = r_max;
        radii[0] = r_first;
        Ok(Self {
            r_min,
            r_max,
            n_r,
            n_theta,
            includes_disk,
            radii,
        })
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    /// Radius of the innermost ring.
    pub fn r_first(&self) -> f64 {
        self.radii[0]
    }
    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn includes_disk(&self) -> bool {
        self.includes_disk
    }
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
    pub fn radius(&self, ring: usize) -> f64 {
        self.radii[ring]
    }
    /// Uniform step in `log r`.
    pub fn log_step(&self) -> f64 {
        (self.r_max / self.radii[0]).ln() / (self.n_r - 1) as f64
    }
    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }
    pub fn theta(&self, j: usize) -> f64 {
        self.dtheta() * j as f64
    }
    /// Smallest radial spacing between neighbouring nodes (center included).
    pub fn min_radial_spacing(&self) -> f64 {
        if self.includes_disk {
            self.radii[0]
        } else {
            self.radii[1] - self.radii[0]
        }
    }
    fn offset(&self) -> usize {
        usize::from(self.includes_disk)
    }
    pub fn n_nodes(&self) -> usize {
        self.offset() + self.n_r * self.n_theta
    }
    pub fn center(&self) -> Option<usize> {
        self.includes_disk.then_some(0)
    }
    pub fn node(&self, ring: usize, j: usize) -> usize {
        self.offset() + ring * self.n_theta + (j % self.n_theta)
    }
    /// `(ring, angle)` for a ring node, `None` for the center.
    pub fn ring_of(&self, node: usize) -> Option<(usize, usize)> {
        if self.includes_disk && node == 0 {
            None
        } else {
            let k = node - self.offset();
            Some((k / self.n_theta, k % self.n_theta))
        }
    }
    /// Polar coordinates of a node.
    pub fn polar(&self, node: usize) -> (f64, f64) {
        match self.ring_of(node) {
            None => (0.0, 0.0),
            Some((i, j)) => (self.radii[i], self.theta(j)),
        }
    }
    pub fn cartesian(&self, node: usize) -> (f64, f64) {
        let (r, t) = self.polar(node);
        (r * t.cos(), r * t.sin())
    }
    pub fn ring_nodes(&self, ring: usize) -> std::ops::Range<usize> {
        let s = self.node(ring, 0);
        s..s + self.n_theta
    }

    /// Nearest ring (in `log r`) to radius `t`; `None` means the center node.
    pub fn snap(&self, t: f64) -> Result<Option<usize>> {
        let tol = 1e-12 * self.r_max;
        if !(t.is_finite()) || t > self.r_max + tol || t < -tol {
            return Err(Error::RegionOutOfRange(format!(
                "radius {t} outside grid [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        if self.includes_disk && t < 0.5 * self.radii[0] {
            return Ok(None);
        }
        if !self.includes_disk && t < self.r_min - tol {
            return Err(Error::RegionOutOfRange(format!(
                "radius {t} inside the annulus hole (r_min = {})",
                self.r_min
            )));
        }
        let t = t.max(self.radii[0]);
        let s = (t / self.radii[0]).ln() / self.log_step();
        Ok(Some((s.round() as usize).min(self.n_r - 1)))
    }

    /// Same rings, new angular resolution.
    pub fn with_n_theta(&self, n_theta: usize) -> Result<Self> {
        Self::build(
            self.r_min,
            self.radii[0],
            self.r_max,
            self.n_r,
            n_theta,
            self.includes_disk,
        )
    }
}

/// Conformal factor specification: `rho(x) = c` or `rho(x) = sum_i c_i |x|^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoSpec {
    Constant { value: f64 },
    RadialPolynomial { coefficients: Vec<f64> },
}

impl Default for RhoSpec {
    fn default() -> Self {
        RhoSpec::Constant { value: 0.0 }
    }
}

impl RhoSpec {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            RhoSpec::Constant { value } => *value,
            RhoSpec::RadialPolynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * r + c)
            }
        }
    }
    /// `d rho / d r`.
    pub fn eval_dr(&self, r: f64) -> f64 {
        match self {
            RhoSpec::Constant { .. } => 0.0,
            RhoSpec::RadialPolynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, c)| acc * r + i as f64 * c),
        }
    }
}

/// A flat chart `D_gamma(0)` with metric `e^{2 rho}(dx_1^2 + dx_2^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalChart {
    gamma: f64,
    spec: RhoSpec,
    rho: Vec<f64>,
    rho_at_origin: f64,
}

impl ConformalChart {
    pub fn new(grid: &PolarGrid, gamma: f64, spec: RhoSpec) -> Result<Self> {
        if !(gamma > 0.0) || grid.r_max() > gamma * (1.0 + 1e-12) {
            return Err(Error::InvalidChart(format!(
                "grid radius {} exceeds chart radius {gamma}",
                grid.r_max()
            )));
        }
        let rho: Vec<f64> = (0..grid.n_nodes())
            .map(|n| spec.eval(grid.polar(n).0))
            .collect();
        if let Some(bad) = rho.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidChart(format!("rho is not finite at node {bad}")));
        }
        // nearest node to the origin: the center, or the first node of ring 0
        let rho_at_origin = rho[0];
        Ok(Self {
            gamma,
            spec,
            rho,
            rho_at_origin,
        })
    }

    /// Flat chart (`rho = 0`) whose radius equals the grid radius.
    pub fn flat(grid: &PolarGrid) -> Self {
        Self::new(grid, grid.r_max(), RhoSpec::default()).expect("flat chart is always valid")
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn spec(&self) -> &RhoSpec {
        &self.spec
    }
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
    pub fn rho_at_origin(&self) -> f64 {
        self.rho_at_origin
    }
    pub fn is_flat(&self) -> bool {
        self.rho.iter().all(|&r| r == 0.0)
    }
    /// `e^{-2 rho}` per node.
    pub fn inv_metric(&self) -> Vec<f64> {
        self.rho.iter().map(|r| (-2.0 * r).exp()).collect()
    }
    /// `e^{2 rho}` per node.
    pub fn metric(&self) -> Vec<f64> {
        self.rho.iter().map(|r| (2.0 * r).exp()).collect()
    }
    pub fn check(&self, grid: &PolarGrid) -> Result<()> {
        if self.rho.len() != grid.n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "chart has {} nodes, grid has {}",
                self.rho.len(),
                grid.n_nodes()
            )));
        }
        Ok(())
    }
}

/// The unit sphere `S^n` in `R^l`, `l = n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereTarget {
    pub ambient_dim: usize,
}

impl Default for SphereTarget {
    fn default() -> Self {
        Self { ambient_dim: 3 }
    }
}

pub const PROJECTION_TOL: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Radial retraction `p / |p|` onto the unit sphere.
pub fn project_to_target(p: &[f64]) -> Result<Vec<f64>> {
    let n = norm(p);
    if !(n >= 1e-14) {
        return Err(Error::ZeroVector(n));
    }
    Ok(p.iter().map(|x| x / n).collect())
}

/// In-place retraction; returns the norm before projection.
pub fn project_in_place(p: &mut [f64]) -> Result<f64> {
    let n = norm(p);
    if !(n >= 1e-14) {
        return Err(Error::ZeroVector(n));
    }
    p.iter_mut().for_each(|x| *x /= n);
    Ok(n)
}

/// Second fundamental form of the unit sphere, `A(u)(X, Y) = -<X, Y> u`.
pub fn second_fundamental_form(u: &[f64], x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    for v in [x, y] {
        let c = dot(v, u);
        if c.abs() > 1e-8 * norm(x) * norm(y) && c.abs() > 1e-300 {
            return Err(Error::NotTangent(c.abs()));
        }
    }
    let s = dot(x, y);
    Ok(u.iter().map(|ui| -s * ui).collect())
}

/// `v - <v, u> u`.
pub fn tangent_project(u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    tangent_project_in_place(u, &mut out);
    out
}

pub fn tangent_project_in_place(u: &[f64], v: &mut [f64]) {
    let c = dot(v, u);
    v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= c * ui);
}

/// Geodesic distance between two unit vectors, stable for near and far points.
pub fn great_circle_distance(a: &[f64], b: &[f64]) -> f64 {
    let chord: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    2.0 * (0.5 * chord).min(1.0).asin()
}

/// A discrete sphere-valued map, one point of `R^l` per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct MapField {
    grid: PolarGrid,
    dim: usize,
    values: Vec<f64>,
}

impl MapField {
    /// Builds a field, projecting every value onto the sphere.
    pub fn new(grid: PolarGrid, dim: usize, mut values: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::ShapeMismatch(format!("ambient_dim must be >= 2, got {dim}")));
        }
        if values.len() != grid.n_nodes() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} nodes of dimension {dim}",
                values.len(),
                grid.n_nodes()
            )));
        }
        for p in values.chunks_mut(dim) {
            project_in_place(p)?;
        }
        Ok(Self { grid, dim, values })
    }

    /// Samples `f(x, y)` at every node and projects.
    pub fn from_fn(
        grid: PolarGrid,
        dim: usize,
        mut f: impl FnMut(f64, f64) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_nodes() * dim);
        for n in 0..grid.n_nodes() {
            let (x, y) = grid.cartesian(n);
            let v = f(x, y);
            if v.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "sampler returned {} components, expected {dim}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        Self::new(grid, dim, values)
    }

    pub fn constant(grid: PolarGrid, value: &[f64]) -> Result<Self> {
        let v = project_to_target(value)?;
        Self::from_fn(grid, value.len(), |_, _| v.clone())
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }
    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    /// Replaces the values, retracting each node onto the sphere.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        *self = Self::new(self.grid.clone(), self.dim, values)?;
        Ok(())
    }

    /// Largest `||u| - 1|` over the nodes.
    pub fn constraint_violation(&self) -> f64 {
        self.values
            .chunks(self.dim)
            .map(|p| (norm(p) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Component `c` as a scalar field.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.chunks(self.dim).map(|p| p[c]).collect()
    }

    pub(crate) fn from_raw(grid: PolarGrid, dim: usize, values: Vec<f64>) -> Self {
        Self { grid, dim, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_examples() {
        assert!(close(&project_to_target(&[2.0, 0.0, 0.0]).unwrap(), &[1.0, 0.0, 0.0], 1e-15));
        assert!(close(&project_to_target(&[0.0, 0.0, 1.0]).unwrap(), &[0.0, 0.0, 1.0], 1e-15));
        assert!(close(
            &project_to_target(&[1.0, 1.0, 1.0, 1.0]).unwrap(),
            &[0.5, 0.5, 0.5, 0.5],
            1e-15
        ));
        assert!(matches!(project_to_target(&[0.0, 1e-15, 0.0]), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn second_fundamental_form_examples() {
        let n = [0.0, 0.0, 1.0];
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        assert_eq!(second_fundamental_form(&n, &e1, &e1).unwrap(), vec![0.0, 0.0, -1.0]);
        assert!(close(&second_fundamental_form(&n, &e1, &e2).unwrap(), &[0.0; 3], 0.0));
        let v = [0.0, 3.0, 0.0];
        assert_eq!(second_fundamental_form(&e1, &v, &v).unwrap(), vec![-9.0, 0.0, 0.0]);
        assert!(matches!(
            second_fundamental_form(&n, &[1.0, 0.0, 0.5], &e1),
            Err(Error::NotTangent(_))
        ));
    }

    #[test]
    fn tangent_projection_examples() {
        let n = [0.0, 0.0, 1.0];
        assert_eq!(tangent_project(&n, &[0.0, 0.0, 5.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(tangent_project(&n, &[1.0, 2.0, 0.0]), vec![1.0, 2.0, 0.0]);
        assert_eq!(tangent_project(&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn grid_invariants_and_errors() {
        let g = PolarGrid::disk(1e-3, 1.0, 32, 16).unwrap();
        assert_eq!(g.n_nodes(), 1 + 32 * 16);
        assert!(g.radii().windows(2).all(|w| w[1] > w[0]));
        assert!((g.dtheta() - 2.0 * PI / 16.0).abs() < 1e-15);
        assert_eq!(g.r_min(), 0.0);
        assert!(PolarGrid::disk(1e-3, 1.0, 3, 16).is_err());
        assert!(PolarGrid::disk(1e-3, 1.0, 8, 15).is_err());
        assert!(PolarGrid::disk(1e-3, 1.0, 8, 6).is_err());
        assert!(PolarGrid::annulus(0.0, 1.0, 8, 8).is_err());
        assert_eq!(g.snap(0.0).unwrap(), None);
        assert_eq!(g.snap(1.0).unwrap(), Some(31));
        assert!(g.snap(1.5).is_err());
    }

    #[test]
    fn chart_rho_at_origin_and_radius_check() {
        let g = PolarGrid::disk(1e-3, 1.0, 16, 8).unwrap();
        let c = ConformalChart::new(
            &g,
            1.0,
            RhoSpec::RadialPolynomial { coefficients: vec![0.3, 0.0, 1.0] },
        )
        .unwrap();
        assert_eq!(c.rho_at_origin(), 0.3);
        assert!(ConformalChart::new(&g, 0.5, RhoSpec::default()).is_err());
        let spec = RhoSpec::RadialPolynomial { coefficients: vec![1.0, 2.0, 3.0] };
        assert!((spec.eval(2.0) - 17.0).abs() < 1e-14);
        assert!((spec.eval_dr(2.0) - 14.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(p in prop::collection::vec(-10.0f64..10.0, 2..6)) {
            prop_assume!(norm(&p) > 1e-6);
            let once = project_to_target(&p).unwrap();
            let twice = project_to_target(&once).unwrap();
            prop_assert!(close(&once, &twice, 1e-14));
            prop_assert!((norm(&once) - 1.0).abs() <= PROJECTION_TOL);
        }

        #[test]
        fn tangent_projection_is_orthogonal(
            p in prop::collection::vec(-10.0f64..10.0, 3),
            v in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            prop_assume!(norm(&p) > 1e-6);
            let u = project_to_target(&p).unwrap();
            let t = tangent_project(&u, &v);
            prop_assert!(dot(&t, &u).abs() <= 1e-12 * (1.0 + norm(&v)));
        }

        #[test]
        fn sff_symmetric_and_normal(
            p in prop::collection::vec(-1.0f64..1.0, 3),
            a in prop::collection::vec(-1.0f64..1.0, 3),
            b in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            prop_assume!(norm(&p) > 1e-3);
            let u = project_to_target(&p).unwrap();
            let x = tangent_project(&u, &a);
            let y = tangent_project(&u, &b);
            let xy = second_fundamental_form(&u, &x, &y).unwrap();
            let yx = second_fundamental_form(&u, &y, &x).unwrap();
            prop_assert!(close(&xy, &yx, 1e-15));
            // normal: parallel to u
            let t = tangent_project(&u, &xy);
            prop_assert!(norm(&t) <= 1e-12);
        }
    }
}
