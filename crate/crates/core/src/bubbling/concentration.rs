//! Concentration points, rescaled bubble windows and per-bubble energies.

use serde::{Deserialize, Serialize};

use crate::calculus::{Operators, Region};
use crate::energy::{biharmonic_energy, epsilon_energy};
use crate::error::{Error, Result};
use crate::geometry::{ConformalChart, MapField, PolarGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub node: usize,
    pub x: [f64; 2],
    /// `1 / max |∇u|`.
    pub r: f64,
    pub max_gradient: f64,
}

/// Largest `|∇u|` decides the point; ties go to the smaller radius, then the
/// smaller angular index. Nodes with `|∇u| ≥ max/2` farther than `10 r` from
/// the point count as further concentrations and are rejected.
pub fn detect_concentration(ops: &Operators, u: &MapField) -> Result<Concentration> {
    if ops.grid() != u.grid() {
        return Err(Error::ShapeMismatch("field and operators use different grids".into()));
    }
    let g = ops.grid();
    let ns = ops.gradient(u.values(), u.dim())?.norm_sq;
    let mut best = 0;
    for (n, &v) in ns.iter().enumerate() {
        if v > ns[best] {
            best = n;
        }
    }
    let max = ns[best].sqrt();
    if !(max >= 1e-10) {
        return Err(Error::ConstantField(max));
    }
    let r = 1.0 / max;
    let (x0, y0) = g.cartesian(best);
    let far = (0..g.n_nodes())
        .filter(|&n| ns[n].sqrt() >= 0.5 * max)
        .filter(|&n| {
            let (x, y) = g.cartesian(n);
            (x - x0).hypot(y - y0) > 10.0 * r
        })
        .count();
    if far > 0 {
        return Err(Error::MultipleConcentrations(far + 1));
    }
    Ok(Concentration { node: best, x: [x0, y0], r, max_gradient: max })
}

/// Layout of a rescaled window: a disk grid of radius `radius` in the
/// rescaled variable `y = (x - x_k) / r_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub radius: f64,
    pub r_first: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl WindowSpec {
    pub fn grid(&self) -> Result<PolarGrid> {
        PolarGrid::disk(self.r_first, self.radius, self.n_r, self.n_theta)
    }
}

/// Periodic cardinal function of an even number `n` of equispaced nodes.
fn periodic_cardinal(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let s = half.sin();
    if s.abs() < 1e-14 {
        return 1.0;
    }
    (n as f64 * half).sin() * half.cos() / (n as f64 * s)
}

/// Unprojected value of `u` at `(x, y)`: linear in `log r` between rings
/// (linear in `r` inside the first ring of a disk), trigonometric in `θ`.
fn sample(u: &MapField, x: f64, y: f64, out: &mut [f64]) -> Result<()> {
    let g = u.grid();
    let dim = u.dim();
    let r = x.hypot(y);
    let tol = 1e-12;
    if r > g.r_max() * (1.0 + tol) || (!g.includes_disk() && r < g.r_min() * (1.0 - tol)) {
        return Err(Error::WindowOutOfChart(r));
    }
    let th = y.atan2(x);
    let nt = g.n_theta();
    let weights: Vec<f64> = (0..nt).map(|j| periodic_cardinal(nt, th - g.theta(j))).collect();
    let ring_value = |i: usize, c: usize| -> f64 {
        g.ring_nodes(i).zip(&weights).map(|(n, w)| w * u.values()[n * dim + c]).sum()
    };
    out.iter_mut().for_each(|v| *v = 0.0);
    let r0 = g.r_first();
    if r < r0 {
        if g.includes_disk() {
            let t = r / r0;
            for (c, o) in out.iter_mut().enumerate() {
                *o = (1.0 - t) * u.values()[c] + t * ring_value(0, c);
            }
        } else {
            for (c, o) in out.iter_mut().enumerate() {
                *o = ring_value(0, c);
            }
        }
        return Ok(());
    }
    let s = ((r / r0).ln() / g.log_step()).clamp(0.0, (g.n_r() - 1) as f64);
    let i = (s.floor() as usize).min(g.n_r() - 2);
    let t = s - i as f64;
    for (c, o) in out.iter_mut().enumerate() {
        *o = (1.0 - t) * ring_value(i, c) + t * ring_value(i + 1, c);
    }
    Ok(())
}

/// `y ↦ u(x + r y)` sampled on the window grid and re-projected.
pub fn rescale_window(u: &MapField, x: [f64; 2], r: f64, spec: &WindowSpec) -> Result<MapField> {
    if !(r > 0.0) {
        return Err(Error::InvalidOptions(format!("rescale radius must be positive, got {r}")));
    }
    let g = u.grid();
    let reach = spec.radius * r;
    let centre = x[0].hypot(x[1]);
    if centre + reach > g.r_max() * (1.0 + 1e-12) || (!g.includes_disk() && centre - reach < g.r_min()) {
        return Err(Error::WindowOutOfChart(reach));
    }
    let wg = spec.grid()?;
    let dim = u.dim();
    let mut values = vec![0.0; wg.n_nodes() * dim];
    for n in 0..wg.n_nodes() {
        let (a, b) = wg.cartesian(n);
        sample(u, x[0] + r * a, x[1] + r * b, &mut values[n * dim..(n + 1) * dim])
            .map_err(|_| Error::WindowOutOfChart(reach))?;
    }
    MapField::new(wg, dim, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleRecord {
    pub x: [f64; 2],
    pub r: f64,
    pub cut_radius: f64,
    /// `∫_{B_R} |∇ω|^2` of the rescaled window.
    pub dirichlet: f64,
    /// `∫_{B_R} |Δω|^2` of the rescaled window (flat).
    pub biharmonic: f64,
    pub dirichlet_tail: f64,
    pub biharmonic_tail: f64,
}

/// Rescales around `c` and measures the energies of the window.
pub fn bubble_record(u: &MapField, c: &Concentration, spec: &WindowSpec) -> Result<(BubbleRecord, MapField)> {
    let w = rescale_window(u, c.x, c.r, spec)?;
    let ops = Operators::new(w.grid());
    let chart = ConformalChart::flat(w.grid());
    let rep = epsilon_energy(&ops, &chart, &w, 0.0, Region::Full)?;
    let record = BubbleRecord {
        x: c.x,
        r: c.r,
        cut_radius: spec.radius,
        dirichlet: rep.dirichlet,
        biharmonic: biharmonic_energy(&ops, &chart, &w, Region::Full)?,
        dirichlet_tail: rep.dirichlet_tail,
        biharmonic_tail: rep.biharmonic_tail,
    };
    Ok((record, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv_stereo(x: f64, y: f64) -> Vec<f64> {
        let s = x * x + y * y;
        vec![2.0 * x / (1.0 + s), 2.0 * y / (1.0 + s), (s - 1.0) / (1.0 + s)]
    }

    #[test]
    fn cardinal_is_interpolating() {
        for j in 0..16 {
            let v = periodic_cardinal(16, std::f64::consts::TAU * j as f64 / 16.0);
            assert!((v - if j == 0 { 1.0 } else { 0.0 }).abs() < 1e-14, "{j} {v}");
        }
    }

    #[test]
    fn identity_resample_reproduces_nodes() {
        let g = PolarGrid::disk(1e-2, 2.0, 64, 16).unwrap();
        let u = MapField::from_fn(g.clone(), 3, inv_stereo).unwrap();
        let spec = WindowSpec { radius: 2.0, r_first: 1e-2, n_r: 64, n_theta: 16 };
        let w = rescale_window(&u, [0.0, 0.0], 1.0, &spec).unwrap();
        let err = u.values().iter().zip(w.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn detects_the_bubble_point() {
        let g = PolarGrid::disk(1e-3, 1.0, 128, 16).unwrap();
        let ops = Operators::new(&g);
        let r = 0.05;
        let u = MapField::from_fn(g, 3, |x, y| inv_stereo(x / r, y / r)).unwrap();
        let c = detect_concentration(&ops, &u).unwrap();
        assert_eq!(c.node, 0);
        assert!((c.r - r / 8f64.sqrt()).abs() < 1e-3 * r, "{}", c.r);
    }

    #[test]
    fn constant_fields_are_rejected() {
        let g = PolarGrid::disk(1e-2, 1.0, 16, 8).unwrap();
        let ops = Operators::new(&g);
        let u = MapField::constant(g, &[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(detect_concentration(&ops, &u), Err(Error::ConstantField(_))));
    }

    #[test]
    fn two_bubbles_are_rejected() {
        let g = PolarGrid::disk(1e-3, 1.0, 128, 64).unwrap();
        let ops = Operators::new(&g);
        let r = 0.05;
        // w = r/(z - 1/2) + r/(z + 1/2): two bubbles of equal scale
        let u = MapField::from_fn(g, 3, |x, y| {
            let inv = |a: f64, b: f64| {
                let d = a * a + b * b;
                (r * a / d, -r * b / d)
            };
            let (p, q) = inv(x - 0.5, y);
            let (s, t) = inv(x + 0.5, y);
            inv_stereo(p + s, q + t)
        })
        .unwrap();
        let d = detect_concentration(&ops, &u);
        assert!(matches!(d, Err(Error::MultipleConcentrations(_))), "{d:?}");
    }

    #[test]
    fn windows_outside_the_chart_are_rejected() {
        let g = PolarGrid::disk(1e-2, 1.0, 32, 16).unwrap();
        let u = MapField::from_fn(g, 3, inv_stereo).unwrap();
        let spec = WindowSpec { radius: 100.0, r_first: 1e-2, n_r: 32, n_theta: 16 };
        assert!(matches!(rescale_window(&u, [0.0, 0.0], 0.1, &spec), Err(Error::WindowOutOfChart(_))));
    }
}
