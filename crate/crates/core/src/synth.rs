//! Closed-form test configurations: rational harmonic bubbles, geodesic
//! necks and glued sequences with prescribed `(ε_k, r_k, ν)`.
//!
//! Glued fields are oracles for the analyzer, not solver outputs. A glue is
//! `u(x) = T(x) Q(s(|x - x_k|)) ω((x - x_k) / r_k)` where `ω` is the bubble,
//! `Q(s)` rotates its far-field value `N` by the angle `s` along the neck
//! great circle and `T` is the body twist. `s` grows by `L` across the neck
//! annulus `A(R_k r_k, R0)`, linearly in `log r` with smooth ramps at both ends.

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::bubbling::{mu_k, nu_k, AlphaSchedule, Schedule};
use crate::error::{Error, Result};
use crate::geometry::{dot, great_circle_distance, norm, MapField, PolarGrid};

/// `(2x, 2y, |x|^2 - 1) / (1 + |x|^2)`.
pub fn inverse_stereographic(x: f64, y: f64) -> [f64; 3] {
    let s = x * x + y * y;
    [2.0 * x / (1.0 + s), 2.0 * y / (1.0 + s), (s - 1.0) / (1.0 + s)]
}

fn poly_eval(c: &[C], z: C) -> C {
    c.iter().rev().fold(C::new(0.0, 0.0), |acc, a| acc * z + a)
}

fn poly_deriv(c: &[C]) -> Vec<C> {
    c.iter().enumerate().skip(1).map(|(i, a)| a * i as f64).collect()
}

fn trim(mut c: Vec<C>) -> Vec<C> {
    while c.last().is_some_and(|a| a.norm() == 0.0) {
        c.pop();
    }
    c
}

/// Determinant of the Sylvester matrix of `p` and `q` (ascending coefficients).
fn resultant(p: &[C], q: &[C]) -> C {
    let (m, n) = (p.len() - 1, q.len() - 1);
    let size = m + n;
    if size == 0 {
        return C::new(1.0, 0.0);
    }
    let mut a = vec![vec![C::new(0.0, 0.0); size]; size];
    for i in 0..n {
        for (j, c) in p.iter().rev().enumerate() {
            a[i][i + j] = *c;
        }
    }
    for i in 0..m {
        for (j, c) in q.iter().rev().enumerate() {
            a[n + i][i + j] = *c;
        }
    }
    let mut det = C::new(1.0, 0.0);
    for col in 0..size {
        let piv = (col..size).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm())).unwrap();
        if a[piv][col].norm() == 0.0 {
            return C::new(0.0, 0.0);
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..size {
            let f = a[row][col] / a[col][col];
            for k in col..size {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
        }
    }
    det
}

/// Serialized form: ascending complex coefficients as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationalSpec {
    pub numerator: Vec<[f64; 2]>,
    pub denominator: Vec<[f64; 2]>,
}

/// `π^{-1} ∘ (p/q)`, a harmonic map `R^2 → S^2 ⊂ R^3` of degree `max(deg p, deg q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RationalSpec", into = "RationalSpec")]
pub struct RationalBubble {
    p: Vec<C>,
    q: Vec<C>,
    degree: usize,
}

impl TryFrom<RationalSpec> for RationalBubble {
    type Error = Error;
    fn try_from(s: RationalSpec) -> Result<Self> {
        let conv = |v: &[[f64; 2]]| v.iter().map(|c| C::new(c[0], c[1])).collect();
        Self::new(conv(&s.numerator), conv(&s.denominator))
    }
}

impl From<RationalBubble> for RationalSpec {
    fn from(b: RationalBubble) -> Self {
        let conv = |v: &[C]| v.iter().map(|c| [c.re, c.im]).collect();
        Self { numerator: conv(&b.p), denominator: conv(&b.q) }
    }
}

impl RationalBubble {
    /// Coefficients are in ascending powers of `z`.
    pub fn new(p: Vec<C>, q: Vec<C>) -> Result<Self> {
        if p.iter().chain(&q).any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidDegree("non-finite coefficient".into()));
        }
        let (p, q) = (trim(p), trim(q));
        if p.is_empty() || q.is_empty() {
            return Err(Error::InvalidDegree("numerator and denominator must be nonzero".into()));
        }
        let degree = (p.len() - 1).max(q.len() - 1);
        if degree == 0 {
            return Err(Error::InvalidDegree("constant map has degree 0".into()));
        }
        let scale = |v: &[C]| v.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let pn: Vec<C> = p.iter().map(|c| c / scale(&p)).collect();
        let qn: Vec<C> = q.iter().map(|c| c / scale(&q)).collect();
        if resultant(&pn, &qn).norm() < 1e-10 {
            return Err(Error::InvalidDegree("numerator and denominator share a root".into()));
        }
        Ok(Self { p, q, degree })
    }

    /// `z ↦ a z^d`.
    pub fn monomial(d: usize, a: C) -> Result<Self> {
        let mut p = vec![C::new(0.0, 0.0); d + 1];
        p[d] = a;
        Self::new(p, vec![C::new(1.0, 0.0)])
    }

    /// The degree-1 bubble `π^{-1}`.
    pub fn identity() -> Self {
        Self::monomial(1, C::new(1.0, 0.0)).expect("z is a valid bubble")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn value(&self, x: f64, y: f64) -> [f64; 3] {
        let z = C::new(x, y);
        let (p, q) = (poly_eval(&self.p, z), poly_eval(&self.q, z));
        let pq = p * q.conj();
        let (a, b) = (p.norm_sqr(), q.norm_sqr());
        [2.0 * pq.re / (a + b), 2.0 * pq.im / (a + b), (a - b) / (a + b)]
    }

    /// `ω(∞)`.
    pub fn at_infinity(&self) -> [f64; 3] {
        let (dp, dq) = (self.p.len() - 1, self.q.len() - 1);
        match dp.cmp(&dq) {
            std::cmp::Ordering::Greater => [0.0, 0.0, 1.0],
            std::cmp::Ordering::Less => [0.0, 0.0, -1.0],
            std::cmp::Ordering::Equal => {
                let w = self.p[dp] / self.q[dq];
                inverse_stereographic(w.re, w.im)
            }
        }
    }

    /// `|∇ω|^2 = 8 |p'q - pq'|^2 / (|p|^2 + |q|^2)^2`.
    pub fn energy_density(&self, x: f64, y: f64) -> f64 {
        let z = C::new(x, y);
        let (p, q) = (poly_eval(&self.p, z), poly_eval(&self.q, z));
        let w = poly_eval(&poly_deriv(&self.p), z) * q - p * poly_eval(&poly_deriv(&self.q), z);
        8.0 * w.norm_sqr() / (p.norm_sqr() + q.norm_sqr()).powi(2)
    }

    /// `8π d`.
    pub fn dirichlet_energy(&self) -> f64 {
        8.0 * PI * self.degree as f64
    }

    /// `∫ |Δω|^2 = ∫ |∇ω|^4` (harmonic into `S^2`), by quadrature.
    pub fn biharmonic_energy(&self) -> f64 {
        plane_quadrature(|x, y| self.energy_density(x, y).powi(2))
    }

    /// `∫ |∇ω|^2` by the same quadrature (an independent check of `8π d`).
    pub fn dirichlet_quadrature(&self) -> f64 {
        plane_quadrature(|x, y| self.energy_density(x, y))
    }
}

/// `∫_{R^2} f` in log-polar coordinates on `|x| ∈ [e^-18, e^18]`: Simpson in
/// `log r`, trapezoid in `θ`.
fn plane_quadrature(f: impl Fn(f64, f64) -> f64) -> f64 {
    let (nt, nth) = (6000usize, 256usize);
    let (a, b) = (-18.0f64, 18.0f64);
    let h = (b - a) / nt as f64;
    let dth = 2.0 * PI / nth as f64;
    let mut total = 0.0;
    for i in 0..=nt {
        let t = a + h * i as f64;
        let r = t.exp();
        let w = if i == 0 || i == nt { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let ring: f64 = (0..nth).map(|j| {
            let th = dth * j as f64;
            f(r * th.cos(), r * th.sin())
        }).sum();
        total += w * ring * dth * r * r;
    }
    total * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleEnergies {
    pub dirichlet: f64,
    pub biharmonic: f64,
}

/// Samples the bubble on `grid`.
pub fn bubble_field(b: &RationalBubble, grid: &PolarGrid) -> Result<(MapField, BubbleEnergies)> {
    check_poles(b, grid, [0.0, 0.0], 1.0)?;
    let u = MapField::from_fn(grid.clone(), 3, |x, y| b.value(x, y).to_vec())?;
    Ok((u, BubbleEnergies { dirichlet: b.dirichlet_energy(), biharmonic: b.biharmonic_energy() }))
}

fn check_poles(b: &RationalBubble, grid: &PolarGrid, x0: [f64; 2], r: f64) -> Result<()> {
    for n in 0..grid.n_nodes() {
        let (x, y) = grid.cartesian(n);
        let z = C::new((x - x0[0]) / r, (y - x0[1]) / r);
        let scale: f64 = b.q.iter().enumerate().map(|(i, c)| c.norm() * z.norm().powi(i as i32)).sum();
        if poly_eval(&b.q, z).norm() <= 1e-12 * scale {
            return Err(Error::PoleOnGrid(n));
        }
    }
    Ok(())
}

/// `cos(s) a + sin(s) t` for unit `a` and unit `t ⟂ a`.
pub fn great_circle(a: &[f64], t: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(t).map(|(x, y)| s.cos() * x + s.sin() * y).collect()
}

fn unit_tangent(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let c = dot(a, b);
    let t: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - c * y).collect();
    let n = norm(&t);
    (n > 1e-12).then(|| t.iter().map(|x| x / n).collect())
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > 0.0) {
        return Err(Error::ZeroVector(n));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// `u(r, θ) = γ(L log(r/p) / log(q/p))` on the rings of `grid` (`p = r_first`,
/// `q = r_max`), with `γ` the unit-speed great circle from `a` through `b`.
/// `L` must equal `dist(a, b) + 2π winding`.
pub fn geodesic_neck(a: &[f64], b: &[f64], grid: &PolarGrid, length: f64, winding: Option<u32>) -> Result<MapField> {
    let (a, b) = (unit(a)?, unit(b)?);
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch("endpoints of different dimensions".into()));
    }
    let d = great_circle_distance(&a, &b);
    let expected = d + 2.0 * PI * f64::from(winding.unwrap_or(0));
    if (length - expected).abs() > 1e-8 {
        return Err(Error::IncompatibleEndpoints(format!(
            "length {length} does not match arc distance {d} with winding {}",
            winding.unwrap_or(0)
        )));
    }
    let t = match unit_tangent(&a, &b) {
        Some(t) => t,
        None if length == 0.0 => a.clone(),
        None if d > 1.0 => return Err(Error::AntipodalEndpoints),
        None => return Err(Error::IncompatibleEndpoints("coincident endpoints do not fix a great circle".into())),
    };
    let (p, q) = (grid.r_first(), grid.r_max());
    let span = (q / p).ln();
    MapField::from_fn(grid.clone(), a.len(), |x, y| {
        let r = x.hypot(y);
        let s = if r < p { 0.0 } else { length * (r / p).ln() / span };
        great_circle(&a, &t, s)
    })
}

/// How the neck length `L` is chosen for each `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeckMode {
    /// `L = 0`: only the bubble tail remains between the cut radii.
    None,
    /// `L = ν sqrt(e^{-2ρ(0)} B / π)` for a fixed `ν`.
    Nu { nu: f64 },
    /// As `Nu`, with `ν_k = sqrt(ε_k / r_k^2) log(1/r_k)` from the schedule.
    NuSchedule,
    /// Neck Dirichlet energy `2 log(μ_k) E(ω)`, `μ_k = r_k^{1-α_k}`.
    AlphaDirichlet { alpha: AlphaSchedule },
    Length { length: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BodyMap {
    /// `value = None` takes the neck's outer endpoint.
    Constant {
        #[serde(default)]
        value: Option<Vec<f64>>,
    },
    /// `u_∞(x) = rot(rate x_1) P`, rotating `P` in the plane `(P, N × t)`.
    Twist { rate: f64 },
}

/// `R_k = bubble_base · r_k^{-bubble_exponent}`; the neck is `A(R_k r_k, neck_outer)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutRule {
    pub bubble_base: f64,
    #[serde(default)]
    pub bubble_exponent: f64,
    pub neck_outer: f64,
}

impl CutRule {
    pub fn bubble_cut(&self, r: f64) -> f64 {
        self.bubble_base * r.powf(-self.bubble_exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskSpec {
    pub r_first: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl DiskSpec {
    pub fn grid(&self) -> Result<PolarGrid> {
        PolarGrid::disk(self.r_first, self.r_max, self.n_r, self.n_theta)
    }
}

fn quarter() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlueSpec {
    pub bubble: RationalBubble,
    pub schedule: Schedule,
    pub neck: NeckMode,
    /// Initial direction of the neck at `ω(∞)`; derived from the body value
    /// or a coordinate axis when absent.
    #[serde(default)]
    pub neck_direction: Option<Vec<f64>>,
    pub body: BodyMap,
    pub cuts: CutRule,
    pub grid: DiskSpec,
    /// Width of each ramp as a fraction of the neck's `log` length.
    #[serde(default = "quarter")]
    pub ramp_fraction: f64,
    /// `ρ(0)` entering the length formula.
    #[serde(default)]
    pub rho_origin: f64,
}

/// Ground truth attached to each glued field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueTruth {
    pub k: usize,
    pub epsilon: f64,
    pub r: f64,
    pub x: [f64; 2],
    pub bubble_cut: f64,
    pub neck_inner: f64,
    pub neck_outer: f64,
    pub neck_length: f64,
    pub mu_k: f64,
    pub nu_k: f64,
    pub bubble_dirichlet: f64,
    pub bubble_biharmonic: f64,
    /// Continuum Dirichlet energy of the neck profile, `2π ∫ s_t^2 dt`.
    pub neck_dirichlet: f64,
    /// `neck_dirichlet / (2 μ_k e^{-2ρ(0)} B)`: the finite-`k` factor by which
    /// the neck differs from the limiting `2 μ B`. For a linear profile it is
    /// `log(1/r_k) / log(R0 / (R_k r_k))`.
    pub truncation: f64,
    /// `2 e^{-2ρ(0)} μ_k B · truncation`.
    pub predicted_neck: f64,
    /// Energy of the limit map on the chart.
    pub limit_energy: f64,
    pub body_value: Vec<f64>,
    pub construction: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glued {
    pub field: MapField,
    pub truth: GlueTruth,
}

/// `6x^5 - 15x^4 + 10x^3` and its antiderivative.
#[cfg(test)]
fn smoothstep(x: f64) -> f64 {
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}
fn smoothstep_integral(x: f64) -> f64 {
    x.powi(4) * (2.5 + x * (-3.0 + x))
}
const SMOOTHSTEP_SQ: f64 = 181.0 / 462.0;

/// Arclength parameter across the neck: `s_t = c φ(t)` with `φ` a plateau
/// that ramps up over `[t1, t1 + w]` and down over `[t2 - w, t2]`.
#[derive(Debug, Clone, Copy)]
struct Profile {
    t1: f64,
    t2: f64,
    w: f64,
    c: f64,
    length: f64,
}

impl Profile {
    fn new(inner: f64, outer: f64, fraction: f64, length: f64) -> Self {
        let (t1, t2) = (inner.ln(), outer.ln());
        let w = fraction * (t2 - t1);
        Self { t1, t2, w, c: length / (t2 - t1 - w), length }
    }

    fn s(&self, t: f64) -> f64 {
        let Profile { t1, t2, w, c, length } = *self;
        if length == 0.0 || t <= t1 {
            0.0
        } else if t >= t2 {
            length
        } else if t < t1 + w {
            c * w * smoothstep_integral((t - t1) / w)
        } else if t > t2 - w {
            length - c * w * smoothstep_integral((t2 - t) / w)
        } else {
            c * (0.5 * w + t - t1 - w)
        }
    }

    /// `2π ∫ s_t^2 dt`.
    fn dirichlet(&self) -> f64 {
        let span = self.t2 - self.t1;
        2.0 * PI * self.c * self.c * (span - 2.0 * self.w + 2.0 * self.w * SMOOTHSTEP_SQ)
    }

    /// `L` giving the prescribed `dirichlet()`.
    fn length_for(inner: f64, outer: f64, fraction: f64, dirichlet: f64) -> f64 {
        let unit = Self::new(inner, outer, fraction, 1.0).dirichlet();
        (dirichlet / unit).sqrt()
    }
}

/// Rotation taking `v` through the angle `s` in the plane `(e, f)`.
fn rotate(v: &mut [f64], e: &[f64], f: &[f64], s: f64) {
    let (a, b) = (dot(v, e), dot(v, f));
    let (c, sn) = (s.cos(), s.sin());
    for k in 0..v.len() {
        v[k] += (c - 1.0) * (a * e[k] + b * f[k]) + sn * (a * f[k] - b * e[k]);
    }
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl GlueSpec {
    fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let c = &self.cuts;
        if !(c.bubble_base > 0.0 && c.bubble_exponent >= 0.0 && c.bubble_exponent < 1.0) {
            return Err(Error::InvalidSchedule(format!("cut rule {c:?} needs base > 0 and exponent in [0, 1)")));
        }
        if !(c.neck_outer < self.grid.r_max) {
            return Err(Error::InvalidSchedule(format!(
                "neck outer radius {} must lie inside the chart (r_max = {})",
                c.neck_outer, self.grid.r_max
            )));
        }
        if !(self.ramp_fraction > 0.0 && self.ramp_fraction <= 0.5) {
            return Err(Error::InvalidSchedule(format!("ramp fraction {} must be in (0, 0.5]", self.ramp_fraction)));
        }
        Ok(())
    }

    fn neck_tangent(&self, n: &[f64]) -> Result<Vec<f64>> {
        if let Some(t) = &self.neck_direction {
            if t.len() != 3 {
                return Err(Error::ShapeMismatch("neck direction must have 3 components".into()));
            }
            return unit_tangent(n, t)
                .ok_or_else(|| Error::IncompatibleEndpoints("neck direction is parallel to the bubble far field".into()));
        }
        if let BodyMap::Constant { value: Some(p) } = &self.body {
            if let Some(t) = unit_tangent(n, p) {
                return Ok(t);
            }
        }
        let axis = (0..3).find(|&i| n[i].abs() < 0.9).unwrap();
        let mut e = vec![0.0; 3];
        e[axis] = 1.0;
        Ok(unit_tangent(n, &e).unwrap())
    }

    fn length(&self, k: usize, eps: f64, r: f64, inner: f64, b: f64) -> Result<f64> {
        let scale = ((-2.0 * self.rho_origin).exp() * b / PI).sqrt();
        let (o, f) = (self.cuts.neck_outer, self.ramp_fraction);
        Ok(match &self.neck {
            NeckMode::None => 0.0,
            NeckMode::Nu { nu } => {
                if !(nu.is_finite() && *nu >= 0.0) {
                    return Err(Error::InvalidSchedule(format!("nu = {nu} must be finite and >= 0")));
                }
                nu * scale
            }
            NeckMode::NuSchedule => nu_k(eps, r) * scale,
            NeckMode::AlphaDirichlet { alpha } => {
                let mu = alpha.mu_k(k);
                if !(mu >= 1.0) {
                    return Err(Error::InvalidMu(mu));
                }
                Profile::length_for(inner, o, f, 2.0 * mu.ln() * self.bubble.dirichlet_energy())
            }
            NeckMode::Length { length } => {
                if !(*length >= 0.0) {
                    return Err(Error::InvalidSchedule(format!("neck length {length} must be >= 0")));
                }
                *length
            }
        })
    }
}

/// Builds one glued field per schedule entry.
pub fn glue_sequence(spec: &GlueSpec) -> Result<Vec<Glued>> {
    spec.validate()?;
    let grid = spec.grid.grid()?;
    let b_energy = spec.bubble.biharmonic_energy();
    let d_energy = spec.bubble.dirichlet_energy();
    let n = spec.bubble.at_infinity().to_vec();
    let t = spec.neck_tangent(&n)?;
    let twist_axis = cross(&n, &t);
    let mut out = Vec::with_capacity(spec.schedule.len());
    for e in &spec.schedule.entries {
        let bubble_cut = spec.cuts.bubble_cut(e.r);
        let inner = bubble_cut * e.r;
        let outer = spec.cuts.neck_outer;
        match grid.snap(inner)? {
            Some(ring) if ring >= 4 => {}
            _ => return Err(Error::ScheduleExhaustsGrid { k: e.k, radius: inner }),
        }
        if !(inner < outer) {
            return Err(Error::InvalidSchedule(format!(
                "bubble cut {inner} reaches the neck outer radius {outer} at k = {}",
                e.k
            )));
        }
        let centre = e.x[0].hypot(e.x[1]);
        if centre + outer > grid.r_max() {
            return Err(Error::InvalidSchedule(format!("neck around x_{} leaves the chart", e.k)));
        }
        let length = spec.length(e.k, e.epsilon, e.r, inner, b_energy)?;
        let profile = Profile::new(inner, outer, spec.ramp_fraction, length);
        let p = great_circle(&n, &t, length);
        let (limit_energy, rate) = match &spec.body {
            BodyMap::Constant { value: Some(v) } => {
                let v = unit(v)?;
                let gap = great_circle_distance(&v, &p);
                if gap > 1e-8 {
                    return Err(Error::IncompatibleEndpoints(format!(
                        "neck ends {gap:e} away from the body value at k = {}",
                        e.k
                    )));
                }
                (0.0, 0.0)
            }
            BodyMap::Constant { value: None } => (0.0, 0.0),
            BodyMap::Twist { rate } => (rate * rate * PI * grid.r_max().powi(2), *rate),
        };
        check_poles(&spec.bubble, &grid, e.x, e.r)?;
        let field = MapField::from_fn(grid.clone(), 3, |x, y| {
            let (dx, dy) = (x - e.x[0], y - e.x[1]);
            let rr = dx.hypot(dy);
            let mut v = spec.bubble.value(dx / e.r, dy / e.r).to_vec();
            let s = if rr > 0.0 { profile.s(rr.ln()) } else { 0.0 };
            rotate(&mut v, &n, &t, s);
            if rate != 0.0 {
                rotate(&mut v, &p, &twist_axis, rate * x);
            }
            v
        })?;
        let nu = nu_k(e.epsilon, e.r);
        let mu = mu_k(e.epsilon, e.r);
        let neck_dirichlet = profile.dirichlet();
        let weight = (-2.0 * spec.rho_origin).exp() * b_energy;
        let truncation = if matches!(spec.neck, NeckMode::None) || mu == 0.0 {
            0.0
        } else {
            neck_dirichlet / (2.0 * mu * weight)
        };
        let body_value = match spec.body {
            BodyMap::Twist { rate } => {
                let mut v = p.clone();
                rotate(&mut v, &p, &twist_axis, rate * e.x[0]);
                v
            }
            _ => p.clone(),
        };
        out.push(Glued {
            field,
            truth: GlueTruth {
                k: e.k,
                epsilon: e.epsilon,
                r: e.r,
                x: e.x,
                bubble_cut,
                neck_inner: inner,
                neck_outer: outer,
                neck_length: length,
                mu_k: mu,
                nu_k: nu,
                bubble_dirichlet: d_energy,
                bubble_biharmonic: b_energy,
                neck_dirichlet,
                truncation,
                predicted_neck: 2.0 * mu * weight * truncation,
                limit_energy,
                body_value,
                construction: "synthetic glue (analyzer oracle, not a solver output)".into(),
            },
        });
    }
    Ok(out)
}

/// Adds uniform noise of the given amplitude to every component and projects.
pub fn perturbed(u: &MapField, amplitude: f64, seed: u64) -> Result<MapField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = u.values().iter().map(|v| v + amplitude * rng.gen_range(-1.0..=1.0)).collect();
    MapField::new(u.grid().clone(), u.dim(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbling::{AnalyticSchedule, EpsilonForm, RadiusForm};

    #[test]
    fn stereographic_examples() {
        assert_eq!(inverse_stereographic(0.0, 0.0), [0.0, 0.0, -1.0]);
        assert!(inverse_stereographic(0.6, 0.8)[2].abs() < 1e-16);
        let far = inverse_stereographic(1e3, 0.0);
        assert!(great_circle_distance(&far, &[0.0, 0.0, 1.0]) <= 2e-3);
    }

    #[test]
    fn quadrature_oracles() {
        let b = RationalBubble::identity();
        assert!((b.biharmonic_energy() - 64.0 * PI / 3.0).abs() < 1e-8);
        assert!((b.dirichlet_quadrature() - 8.0 * PI).abs() < 1e-8);
        let b2 = RationalBubble::monomial(2, C::new(1.0, 0.0)).unwrap();
        assert!((b2.dirichlet_quadrature() - 16.0 * PI).abs() < 1e-6);
        let m = RationalBubble::new(
            vec![C::new(0.3, 0.1), C::new(0.0, 0.0), C::new(1.0, 0.0)],
            vec![C::new(1.0, 0.0), C::new(0.0, 0.5)],
        )
        .unwrap();
        assert!((m.dirichlet_quadrature() - 16.0 * PI).abs() < 1e-4, "{}", m.dirichlet_quadrature());
    }

    #[test]
    fn degenerate_bubbles_are_rejected() {
        let c = |x| C::new(x, 0.0);
        assert!(matches!(RationalBubble::new(vec![c(2.0)], vec![c(1.0)]), Err(Error::InvalidDegree(_))));
        // (z - 1) / (z^2 - 1)
        assert!(matches!(
            RationalBubble::new(vec![c(-1.0), c(1.0)], vec![c(-1.0), c(0.0), c(1.0)]),
            Err(Error::InvalidDegree(_))
        ));
        let g = PolarGrid::disk(0.5, 2.0, 8, 8).unwrap();
        let pole = RationalBubble::new(vec![c(1.0)], vec![c(-0.5), c(1.0)]).unwrap();
        assert!(matches!(bubble_field(&pole, &g), Err(Error::PoleOnGrid(_))));
    }

    #[test]
    fn far_field_values() {
        assert_eq!(RationalBubble::identity().at_infinity(), [0.0, 0.0, 1.0]);
        let inv = RationalBubble::new(vec![C::new(1.0, 0.0)], vec![C::new(0.0, 0.0), C::new(1.0, 0.0)]).unwrap();
        assert_eq!(inv.at_infinity(), [0.0, 0.0, -1.0]);
    }

    #[test]
    fn geodesic_neck_examples() {
        let g = PolarGrid::annulus(0.1, 1.0, 64, 8).unwrap();
        let (a, b) = ([0.0, 0.0, -1.0], [1.0, 0.0, 0.0]);
        let u = geodesic_neck(&a, &b, &g, PI / 2.0, None).unwrap();
        let first = u.value(g.node(0, 0));
        let last = u.value(g.node(63, 3));
        assert!(great_circle_distance(first, &a) < 1e-12 && great_circle_distance(last, &b) < 1e-12);
        let c = geodesic_neck(&a, &a, &g, 0.0, None).unwrap();
        assert!(c.values().chunks(3).all(|v| v == a));
        assert!(matches!(geodesic_neck(&a, &[0.0, 0.0, 1.0], &g, PI, None), Err(Error::AntipodalEndpoints)));
        assert!(matches!(geodesic_neck(&a, &b, &g, 1.0, None), Err(Error::IncompatibleEndpoints(_))));
        let w = geodesic_neck(&a, &b, &g, PI / 2.0 + 2.0 * PI, Some(1)).unwrap();
        assert!(great_circle_distance(w.value(g.node(63, 0)), &b) < 1e-12);
    }

    #[test]
    fn profile_integrates_to_the_length() {
        let p = Profile::new(0.01, 1.0, 0.25, 3.0);
        assert!((p.s((0.01f64).ln() + 1e-12) - 0.0).abs() < 1e-9);
        assert!((p.s(0.0) - 3.0).abs() < 1e-12);
        let (t1, t2) = (p.t1, p.t2);
        let n = 200_000;
        let h = (t2 - t1) / n as f64;
        let num: f64 = (0..n)
            .map(|i| {
                let t = t1 + h * (i as f64 + 0.5);
                ((p.s(t + 1e-6) - p.s(t - 1e-6)) / 2e-6).powi(2)
            })
            .sum::<f64>()
            * h
            * 2.0
            * PI;
        assert!((num - p.dirichlet()).abs() < 1e-5 * p.dirichlet(), "{num} {}", p.dirichlet());
        assert!(smoothstep(0.5) == 0.5);
    }

    fn spec(neck: NeckMode) -> GlueSpec {
        let form = AnalyticSchedule {
            radius: RadiusForm::Geometric { r0: 0.125, q: 0.5 },
            epsilon: EpsilonForm { coeff: 4.0, a: 2.0, b: -2 },
        };
        GlueSpec {
            bubble: RationalBubble::identity(),
            schedule: Schedule::from_analytic(form, 1..=2).unwrap(),
            neck,
            neck_direction: None,
            body: BodyMap::Constant { value: None },
            cuts: CutRule { bubble_base: 1.0, bubble_exponent: 2.0 / 3.0, neck_outer: 1.0 },
            grid: DiskSpec { r_first: 1e-4, r_max: 4.0, n_r: 128, n_theta: 16 },
            ramp_fraction: 0.25,
            rho_origin: 0.0,
        }
    }

    #[test]
    fn glue_constraint_and_endpoints() {
        let gl = glue_sequence(&spec(NeckMode::Nu { nu: 2.0 })).unwrap();
        for g in &gl {
            assert!(g.field.constraint_violation() <= 1e-12);
            assert!((g.truth.neck_length - 16.0 / 3f64.sqrt()).abs() < 1e-6);
            let outer = g.field.value(g.field.grid().node(127, 5));
            assert!(great_circle_distance(outer, &g.truth.body_value) < 0.05);
        }
    }

    #[test]
    fn degenerate_glue_is_the_rescaled_bubble() {
        let mut s = spec(NeckMode::None);
        s.schedule.entries.truncate(1);
        let g = &glue_sequence(&s).unwrap()[0];
        let r = g.truth.r;
        let exact = MapField::from_fn(g.field.grid().clone(), 3, |x, y| inverse_stereographic(x / r, y / r).to_vec()).unwrap();
        let err = exact.values().iter().zip(g.field.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-14, "{err}");
    }

    #[test]
    fn glue_errors() {
        let mut s = spec(NeckMode::Nu { nu: 2.0 });
        s.body = BodyMap::Constant { value: Some(vec![0.0, 1.0, 0.0]) };
        assert!(matches!(glue_sequence(&s), Err(Error::IncompatibleEndpoints(_))));
        let mut s = spec(NeckMode::None);
        s.grid.r_first = 0.3;
        assert!(matches!(glue_sequence(&s), Err(Error::ScheduleExhaustsGrid { .. })));
    }

    #[test]
    fn perturbation_is_seeded() {
        let g = PolarGrid::disk(0.1, 1.0, 8, 8).unwrap();
        let u = MapField::constant(g, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(perturbed(&u, 0.1, 7).unwrap(), perturbed(&u, 0.1, 7).unwrap());
        assert_ne!(perturbed(&u, 0.1, 7).unwrap(), perturbed(&u, 0.1, 8).unwrap());
    }
}
