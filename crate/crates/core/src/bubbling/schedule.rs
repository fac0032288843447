//! Parameter schedules `(ε_k, r_k)`, the limits `μ` and `ν`, the neck regime
//! and the intrinsic energy-identity criterion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `r_k` as a closed form in `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadiusForm {
    /// `r_k = k^{-c}`.
    Power { c: f64 },
    /// `r_k = e^{-k}`.
    Exponential,
    /// `r_k = r0 q^k`.
    Geometric { r0: f64, q: f64 },
}

impl RadiusForm {
    pub fn eval(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            RadiusForm::Power { c } => k.powf(-c),
            RadiusForm::Exponential => (-k).exp(),
            RadiusForm::Geometric { r0, q } => r0 * q.powf(k),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadiusForm::Power { c } => c > 0.0 && c.is_finite(),
            RadiusForm::Exponential => true,
            RadiusForm::Geometric { r0, q } => r0 > 0.0 && q > 0.0 && q < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnsupportedForm(format!("radius form {self:?} does not tend to 0")))
        }
    }
}

/// `ε = coeff · r^a · log^b(1/r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonForm {
    #[serde(default = "one")]
    pub coeff: f64,
    pub a: f64,
    #[serde(default)]
    pub b: i32,
}

fn one() -> f64 {
    1.0
}

impl EpsilonForm {
    pub fn eval(&self, r: f64) -> f64 {
        self.coeff * r.powf(self.a) * (1.0 / r).ln().powi(self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSchedule {
    pub radius: RadiusForm,
    pub epsilon: EpsilonForm,
}

impl AnalyticSchedule {
    pub fn validate(&self) -> Result<()> {
        self.radius.validate()?;
        let e = &self.epsilon;
        if !(e.coeff > 0.0 && e.coeff.is_finite() && e.a.is_finite()) {
            return Err(Error::UnsupportedForm(format!("epsilon form {e:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub k: usize,
    pub epsilon: f64,
    pub r: f64,
    pub x: [f64; 2],
}

impl ScheduleEntry {
    pub fn mu(&self) -> f64 {
        mu_k(self.epsilon, self.r)
    }
    pub fn nu(&self) -> f64 {
        nu_k(self.epsilon, self.r)
    }
}

/// `(ε/r^2) log(1/r)`.
pub fn mu_k(eps: f64, r: f64) -> f64 {
    eps / (r * r) * (1.0 / r).ln()
}

/// `sqrt(ε/r^2) log(1/r)`.
pub fn nu_k(eps: f64, r: f64) -> f64 {
    eps.sqrt() / r * (1.0 / r).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub entries: Vec<ScheduleEntry>,
    pub analytic: Option<AnalyticSchedule>,
}

impl Schedule {
    pub fn from_entries(entries: Vec<ScheduleEntry>) -> Result<Self> {
        let s = Self { entries, analytic: None };
        s.validate()?;
        Ok(s)
    }

    /// Samples an analytic schedule at `ks`, centered at the origin.
    pub fn from_analytic(form: AnalyticSchedule, ks: impl IntoIterator<Item = usize>) -> Result<Self> {
        form.validate()?;
        let entries = ks
            .into_iter()
            .map(|k| {
                let r = form.radius.eval(k);
                ScheduleEntry { k, epsilon: form.epsilon.eval(r), r, x: [0.0, 0.0] }
            })
            .collect();
        let s = Self { entries, analytic: Some(form) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if !(e.epsilon > 0.0 && e.epsilon.is_finite()) {
                return Err(Error::InvalidSchedule(format!("epsilon_{} = {} is not positive", e.k, e.epsilon)));
            }
            if !(e.r > 0.0 && e.r < 1.0) {
                return Err(Error::InvalidSchedule(format!("r_{} = {} is outside (0, 1)", e.k, e.r)));
            }
        }
        for w in self.entries.windows(2) {
            if !(w[1].epsilon < w[0].epsilon) {
                return Err(Error::InvalidSchedule(format!("epsilon is not decreasing at k = {}", w[1].k)));
            }
            if !(w[1].r < w[0].r) {
                return Err(Error::InvalidSchedule(format!("r is not decreasing at k = {}", w[1].k)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NoNeck,
    GeodesicNeck,
    InfiniteNeck,
    Unclassified,
}

impl Regime {
    /// `ν = 0`: no neck; `ν ∈ (1, ∞)`: geodesic neck; `ν = ∞`: infinite neck.
    /// The band `(0, 1]` is left unclassified.
    pub fn from_nu(nu: f64) -> Self {
        if nu == 0.0 {
            Regime::NoNeck
        } else if nu == f64::INFINITY {
            Regime::InfiniteNeck
        } else if nu > 1.0 {
            Regime::GeodesicNeck
        } else {
            Regime::Unclassified
        }
    }
}

/// Behaviour of the tail of a finite sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trend {
    /// Geometric extrapolation of the last three values.
    Converging { estimate: f64 },
    Diverging,
    Indeterminate,
}

/// Aitken extrapolation of the triple ending at `i`.
fn aitken(v: &[f64], i: usize) -> Option<(f64, f64)> {
    let d1 = v[i] - v[i - 1];
    let d2 = v[i - 1] - v[i - 2];
    if d1 == 0.0 {
        return Some((v[i], 0.0));
    }
    if d2 == 0.0 {
        return None;
    }
    let q = d1 / d2;
    Some((v[i] + d1 * q / (1.0 - q), q))
}

/// Converging when the last two Aitken estimates agree to 1% of the sequence
/// scale; diverging when the values grow without such agreement.
pub fn trend(v: &[f64]) -> Trend {
    let n = v.len();
    if n < 4 {
        return Trend::Indeterminate;
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (Some((e1, q)), Some((e0, _))) = (aitken(v, n - 1), aitken(v, n - 2)) else {
        return Trend::Indeterminate;
    };
    if q.abs() < 1.0 && (e1 - e0).abs() <= 1e-2 * scale.max(e1.abs()) {
        return Trend::Converging { estimate: e1 };
    }
    let d: Vec<f64> = v[n - 4..].windows(2).map(|w| w[1] - w[0]).collect();
    if d.iter().all(|x| *x > 0.0) || d.iter().all(|x| *x < 0.0) && q >= 1.0 {
        Trend::Diverging
    } else {
        Trend::Indeterminate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitSource {
    Analytic,
    Finite { mu_trend: Trend, nu_trend: Trend },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuNu {
    #[serde(with = "crate::serde_ext::extended")]
    pub mu: f64,
    #[serde(with = "crate::serde_ext::extended")]
    pub nu: f64,
    pub regime: Regime,
    pub source: LimitSource,
    /// Values at the last entry of the schedule, if it has entries.
    #[serde(with = "crate::serde_ext::extended_opt")]
    pub mu_last: Option<f64>,
    #[serde(with = "crate::serde_ext::extended_opt")]
    pub nu_last: Option<f64>,
}

/// Limit of `coeff · L^p` as `L → ∞`.
fn log_power_limit(coeff: f64, p: f64) -> f64 {
    if p < 0.0 {
        0.0
    } else if p == 0.0 {
        coeff
    } else {
        f64::INFINITY
    }
}

/// Closed-form `(μ, ν)` for `ε = c r^a L^b`, `L = log(1/r)`:
/// `μ = c r^{a-2} L^{b+1}`, `ν = sqrt(c) r^{(a-2)/2} L^{b/2+1}`.
pub fn analytic_mu_nu(form: &AnalyticSchedule) -> Result<(f64, f64)> {
    form.validate()?;
    let EpsilonForm { coeff, a, b } = form.epsilon;
    let b = f64::from(b);
    if a < 2.0 {
        return Err(Error::ViolatesCorollaryBound(format!("r^{a} decays slower than r^2")));
    }
    if a > 2.0 {
        return Ok((0.0, 0.0));
    }
    let mu = log_power_limit(coeff, b + 1.0);
    if mu.is_infinite() {
        return Err(Error::ViolatesCorollaryBound(format!("(eps/r^2) log(1/r) ~ L^{}", b + 1.0)));
    }
    Ok((mu, log_power_limit(coeff.sqrt(), b / 2.0 + 1.0)))
}

/// `x` with values below `10^{-12}` of the sequence scale treated as zero.
fn snap_zero(x: f64, scale: f64) -> f64 {
    if x.abs() <= 1e-12 * scale.max(1.0) {
        0.0
    } else {
        x
    }
}

pub fn mu_nu(schedule: &Schedule) -> Result<MuNu> {
    let last = schedule.entries.last();
    let (mu_last, nu_last) = (last.map(|e| e.mu()), last.map(|e| e.nu()));
    if let Some(form) = &schedule.analytic {
        let (mu, nu) = analytic_mu_nu(form)?;
        return Ok(MuNu { mu, nu, regime: Regime::from_nu(nu), source: LimitSource::Analytic, mu_last, nu_last });
    }
    if schedule.len() < 5 {
        return Err(Error::InvalidSchedule(format!(
            "finite-data limits need at least 5 entries, got {}",
            schedule.len()
        )));
    }
    let mus: Vec<f64> = schedule.entries.iter().map(|e| e.mu()).collect();
    let nus: Vec<f64> = schedule.entries.iter().map(|e| e.nu()).collect();
    let (mu_trend, nu_trend) = (trend(&mus), trend(&nus));
    let value = |t: Trend, last: f64, scale: f64| match t {
        Trend::Converging { estimate } => snap_zero(estimate.max(0.0), scale),
        Trend::Diverging => f64::INFINITY,
        Trend::Indeterminate => last,
    };
    let nu = value(nu_trend, nus[nus.len() - 1], nus[0]);
    let mu = value(mu_trend, mus[mus.len() - 1], mus[0]);
    let regime = match nu_trend {
        Trend::Indeterminate => Regime::Unclassified,
        _ => Regime::from_nu(nu),
    };
    Ok(MuNu {
        mu,
        nu,
        regime,
        source: LimitSource::Finite { mu_trend, nu_trend },
        mu_last,
        nu_last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    EnergyIdentityHolds,
    Fails,
    Indeterminate,
}

/// Growth of the total biharmonic energy `B_k` along an analytic schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiharmonicGrowth {
    /// `B_k = beta / r_k^2`.
    InverseSquare { beta: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicReport {
    /// Limit (analytic) or extrapolated value of `ε_k B_k log B_k`.
    #[serde(with = "crate::serde_ext::extended")]
    pub limit: f64,
    pub values: Vec<f64>,
    pub trend: Option<Trend>,
    pub verdict: Verdict,
}

fn verdict_of(limit: f64) -> Verdict {
    if limit == 0.0 {
        Verdict::EnergyIdentityHolds
    } else {
        Verdict::Fails
    }
}

/// `lim ε_k B_k log B_k` in closed form.
pub fn intrinsic_criterion_analytic(form: &AnalyticSchedule, growth: BiharmonicGrowth) -> Result<IntrinsicReport> {
    form.validate()?;
    let EpsilonForm { coeff, a, b } = form.epsilon;
    let limit = match growth {
        BiharmonicGrowth::Constant { value } => {
            if !(value > 1.0) {
                return Err(Error::InvalidSchedule(format!("B = {value} must exceed 1")));
            }
            0.0
        }
        BiharmonicGrowth::InverseSquare { beta } => {
            if !(beta > 0.0) {
                return Err(Error::InvalidSchedule(format!("beta = {beta} must be positive")));
            }
            // c β r^{a-2} L^b (log β + 2L) ~ 2 c β r^{a-2} L^{b+1}
            if a > 2.0 {
                0.0
            } else if a < 2.0 {
                f64::INFINITY
            } else {
                log_power_limit(2.0 * coeff * beta, f64::from(b) + 1.0)
            }
        }
    };
    Ok(IntrinsicReport { limit, values: Vec::new(), trend: None, verdict: verdict_of(limit) })
}

/// Finite-data version over `(ε_k, B_k)` pairs.
pub fn intrinsic_criterion(seq: &[(f64, f64)]) -> Result<IntrinsicReport> {
    if seq.len() < 5 {
        return Err(Error::InvalidSchedule(format!(
            "intrinsic criterion needs at least 5 entries, got {}",
            seq.len()
        )));
    }
    if let Some(&(_, bk)) = seq.iter().find(|p| !(p.1 > 1.0)) {
        return Err(Error::InvalidSchedule(format!("total biharmonic energy {bk} must exceed 1")));
    }
    let values: Vec<f64> = seq.iter().map(|&(e, b)| e * b * b.ln()).collect();
    let t = trend(&values);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (limit, verdict) = match t {
        Trend::Converging { estimate } => {
            let l = snap_zero(estimate, scale);
            if l.abs() <= 1e-2 * scale {
                (l, Verdict::EnergyIdentityHolds)
            } else {
                (l, Verdict::Fails)
            }
        }
        Trend::Diverging => (f64::INFINITY, Verdict::Fails),
        Trend::Indeterminate => (values[values.len() - 1], Verdict::Indeterminate),
    };
    Ok(IntrinsicReport { limit, values, trend: Some(t), verdict })
}

/// `α_k - 1 = coeff / log^b(1/r_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSchedule {
    pub radius: RadiusForm,
    #[serde(default = "one")]
    pub coeff: f64,
    pub b: f64,
}

impl AlphaSchedule {
    pub fn alpha(&self, k: usize) -> f64 {
        let r = self.radius.eval(k);
        1.0 + self.coeff / (1.0 / r).ln().powf(self.b)
    }

    /// `r_k^{1 - α_k}`.
    pub fn mu_k(&self, k: usize) -> f64 {
        let r = self.radius.eval(k);
        ((self.alpha(k) - 1.0) * (1.0 / r).ln()).exp()
    }
}

/// `μ = lim r_k^{1-α_k} = lim exp(coeff L^{1-b})`.
pub fn alpha_mu(form: &AlphaSchedule) -> Result<f64> {
    form.radius.validate()?;
    let mu = if form.b == 1.0 {
        form.coeff.exp()
    } else if form.b > 1.0 {
        1.0
    } else if form.coeff > 0.0 {
        return Err(Error::UnsupportedForm(format!("alpha_k - 1 ~ L^-{} gives an infinite mu", form.b)));
    } else {
        0.0
    };
    if !(mu >= 1.0) {
        return Err(Error::InvalidMu(mu));
    }
    Ok(mu)
}
