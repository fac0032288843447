//! Neck diagnostics: circle averages, oscillation, length and the regularity
//! monitor.

use serde::{Deserialize, Serialize};

use super::schedule::Regime;
use crate::calculus::{Operators, Region};
use crate::energy::epsilon_energy;
use crate::error::{Error, Result};
use crate::geometry::{dot, great_circle_distance, norm, project_to_target, ConformalChart, MapField};

/// Mean of `u` over the ring nearest `t` (not projected); returns the snapped radius.
pub fn circle_average(u: &MapField, t: f64) -> Result<(Vec<f64>, f64)> {
    let g = u.grid();
    let Some(ring) = g.snap(t)? else {
        return Ok((u.value(0).to_vec(), 0.0));
    };
    Ok((ring_average(u, ring), g.radius(ring)))
}

fn ring_average(u: &MapField, ring: usize) -> Vec<f64> {
    let g = u.grid();
    let dim = u.dim();
    let mut m = vec![0.0; dim];
    for n in g.ring_nodes(ring) {
        for (c, v) in m.iter_mut().enumerate() {
            *v += u.values()[n * dim + c];
        }
    }
    m.iter_mut().for_each(|v| *v /= g.n_theta() as f64);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeckAnalysis {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Bounding-box diagonal of `u` over the annulus (bounds the oscillation
    /// from above, within a factor `sqrt(l)`).
    pub osc: f64,
    /// Great-circle distance between the projected end averages.
    pub chord: f64,
    /// Length of the projected circle-average curve.
    pub measured_length: f64,
    /// Largest turning angle of the projected curve.
    pub geodesic_deviation: f64,
    #[serde(with = "crate::serde_ext::extended")]
    pub nu: f64,
    /// `ν sqrt(e^{-2ρ(0)} B / π)`.
    #[serde(with = "crate::serde_ext::extended")]
    pub predicted_length: f64,
    pub regime: Regime,
    pub radii: Vec<f64>,
    pub curve: Vec<Vec<f64>>,
}

/// Angle between the outgoing direction at `b` toward `c` and the
/// continuation of the incoming direction from `a`.
fn turning_angle(a: &[f64], b: &[f64], c: &[f64]) -> Option<f64> {
    let tangent = |p: &[f64]| -> Option<Vec<f64>> {
        let s = dot(p, b);
        let t: Vec<f64> = p.iter().zip(b).map(|(x, y)| x - s * y).collect();
        let n = norm(&t);
        (n > 1e-14).then(|| t.iter().map(|x| x / n).collect())
    };
    let back = tangent(a)?;
    let fwd = tangent(c)?;
    Some((-dot(&back, &fwd)).clamp(-1.0, 1.0).acos())
}

/// Neck statistics on `A(p, q)` given `ν` and the bubble biharmonic energy `B`.
pub fn neck_analysis(
    u: &MapField,
    chart: &ConformalChart,
    p: f64,
    q: f64,
    nu: f64,
    bubble_biharmonic: f64,
) -> Result<NeckAnalysis> {
    if !(bubble_biharmonic > 0.0) {
        return Err(Error::DegenerateBubble(bubble_biharmonic));
    }
    if !(nu >= 0.0) {
        return Err(Error::InvalidSchedule(format!("nu = {nu} must be >= 0")));
    }
    chart.check(u.grid())?;
    let g = u.grid();
    let (a, b) = match (g.snap(p)?, g.snap(q)?) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => return Err(Error::RegionOutOfRange(format!("neck annulus ({p}, {q}) spans fewer than two rings"))),
    };
    let dim = u.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for i in a..=b {
        for n in g.ring_nodes(i) {
            for c in 0..dim {
                let v = u.values()[n * dim + c];
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
    }
    let osc = lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt();
    let curve = (a..=b).map(|i| project_to_target(&ring_average(u, i))).collect::<Result<Vec<_>>>()?;
    let radii: Vec<f64> = (a..=b).map(|i| g.radius(i)).collect();
    let measured_length = curve.windows(2).map(|w| great_circle_distance(&w[0], &w[1])).sum();
    let chord = great_circle_distance(&curve[0], &curve[curve.len() - 1]);
    let geodesic_deviation = curve
        .windows(3)
        .filter_map(|w| turning_angle(&w[0], &w[1], &w[2]))
        .fold(0.0, f64::max);
    let scale = ((-2.0 * chart.rho_at_origin()).exp() * bubble_biharmonic / std::f64::consts::PI).sqrt();
    let predicted_length = if nu.is_infinite() { f64::INFINITY } else { nu * scale };
    Ok(NeckAnalysis {
        inner_radius: g.radius(a),
        outer_radius: g.radius(b),
        osc,
        chord,
        measured_length,
        geodesic_deviation,
        nu,
        predicted_length,
        regime: Regime::from_nu(nu),
        radii,
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityRatio {
    pub radius: f64,
    /// `R sup_{B_R} |∇u| + R^2 sup_{B_R} |∇^2 u|`.
    pub scaled_derivatives: f64,
    /// `E_ε(u; B_{2R})`.
    pub energy: f64,
    pub ratio: f64,
}

/// Small-energy regularity monitor on `B_R`, normalised by `sqrt(E_ε(B_{2R}))`.
pub fn regularity_ratio(
    ops: &Operators,
    chart: &ConformalChart,
    u: &MapField,
    eps: f64,
    radius: f64,
) -> Result<RegularityRatio> {
    let g = ops.grid();
    if 2.0 * radius > g.r_max() {
        return Err(Error::RegionOutOfRange(format!("B_(2R) with R = {radius} leaves the grid")));
    }
    let dim = u.dim();
    let (ux, uy) = ops.cartesian_gradient(u.values(), dim)?;
    let (uxx, uxy) = ops.cartesian_gradient(&ux, dim)?;
    let (_, uyy) = ops.cartesian_gradient(&uy, dim)?;
    let w = ops.region_weights(Region::Ball(radius))?;
    let (mut g1, mut g2) = (0.0f64, 0.0f64);
    for n in (0..g.n_nodes()).filter(|&n| w[n] > 0.0 && ops.boundary_distance(n) >= 2) {
        let s = n * dim..(n + 1) * dim;
        g1 = g1.max((dot(&ux[s.clone()], &ux[s.clone()]) + dot(&uy[s.clone()], &uy[s.clone()])).sqrt());
        let h = dot(&uxx[s.clone()], &uxx[s.clone()]) + 2.0 * dot(&uxy[s.clone()], &uxy[s.clone()]) + dot(&uyy[s.clone()], &uyy[s]);
        g2 = g2.max(h.sqrt());
    }
    let energy = epsilon_energy(ops, chart, u, eps, Region::Ball(2.0 * radius))?.epsilon_total;
    let scaled = radius * g1 + radius * radius * g2;
    Ok(RegularityRatio {
        radius,
        scaled_derivatives: scaled,
        energy,
        ratio: if energy > 0.0 { scaled / energy.sqrt() } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolarGrid;

    fn inv_stereo(x: f64, y: f64) -> Vec<f64> {
        let s = x * x + y * y;
        vec![2.0 * x / (1.0 + s), 2.0 * y / (1.0 + s), (s - 1.0) / (1.0 + s)]
    }

    #[test]
    fn circle_average_of_the_bubble() {
        let g = PolarGrid::disk(1e-2, 4.0, 64, 16).unwrap();
        let u = MapField::from_fn(g, 3, inv_stereo).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let (m, r) = circle_average(&u, t).unwrap();
            let z = (r * r - 1.0) / (1.0 + r * r);
            assert!(m[0].abs() < 1e-14 && m[1].abs() < 1e-14 && (m[2] - z).abs() < 1e-14);
        }
    }

    #[test]
    fn geodesic_curve_has_exact_length() {
        let g = PolarGrid::annulus(0.1, 1.0, 64, 16).unwrap();
        let c = ConformalChart::flat(&g);
        let len = 2.0;
        let u = MapField::from_fn(g, 3, |x, y| {
            let s = len * ((x * x + y * y).sqrt() / 0.1).ln() / 10f64.ln();
            vec![s.cos(), 0.0, s.sin()]
        })
        .unwrap();
        let a = neck_analysis(&u, &c, 0.1, 1.0, 2.0, 64.0 * std::f64::consts::PI / 3.0).unwrap();
        assert!((a.measured_length - len).abs() < 1e-12, "{}", a.measured_length);
        assert!((a.chord - len).abs() < 1e-12);
        assert!(a.geodesic_deviation < 1e-6);
        assert!((a.predicted_length - 2.0 * (64.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(a.regime, Regime::GeodesicNeck);
        assert!(matches!(neck_analysis(&u, &c, 0.1, 1.0, 2.0, 0.0), Err(Error::DegenerateBubble(_))));
    }

    #[test]
    fn regularity_ratio_is_scale_invariant() {
        let ratios: Vec<f64> = [1.0, 0.1]
            .iter()
            .map(|&l| {
                let g = PolarGrid::disk(1e-3 * l, 4.0 * l, 128, 16).unwrap();
                let ops = Operators::new(&g);
                let c = ConformalChart::flat(&g);
                let u = MapField::from_fn(g, 3, |x, y| inv_stereo(x / l, y / l)).unwrap();
                regularity_ratio(&ops, &c, &u, 0.0, l).unwrap().ratio
            })
            .collect();
        assert!((ratios[0] - ratios[1]).abs() < 1e-6 * ratios[0], "{ratios:?}");
    }
}
