//! Sharp preservation conditions evaluated for a given `(f, g)` or `(f, σ)`.
//!
//! Deterministic conditions are checked on finite series with the shared
//! shrinking-envelope rule. For the noise, `μ`, `S_f` and the integral test
//! get an analytic verdict whenever `σ` belongs to the power family; numerics
//! are reported alongside and only decide when no exponent is known.

use statrs::function::erf::erfc;

use crate::decay_scale::DecayScale;
use crate::diagnostics::{classify, tends_to_zero, Limit, Tolerances, Verdict};
use crate::error::{Error, Result};
use crate::nonlinearity::Family;
use crate::perturbations::{NoiseIntensity, NoiseKind, Perturbation};
use crate::quad::{integrate, QuadOptions};

/// Complementary standard normal distribution function.
pub fn psi(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

const ENVELOPE_THRESHOLD: f64 = 0.05;
/// log-log slopes within this of zero are treated as undecided
const SLOPE_TOL: f64 = 0.01;
const EXP_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CriteriaOptions {
    pub t_end: f64,
    pub eps_grid: Vec<f64>,
    pub h_list: Vec<f64>,
    pub per_decade: usize,
    pub tolerances: Tolerances,
}

impl Default for CriteriaOptions {
    fn default() -> Self {
        Self {
            t_end: 1e6,
            eps_grid: vec![0.1, 1.0, 10.0],
            h_list: vec![0.1, 1.0, 10.0],
            per_decade: 16,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub verdict: Verdict,
    pub limit: Limit,
    /// per-decade sup of `|ratio|` over the last three decades
    pub decade_sups: Vec<f64>,
    pub series: Vec<(f64, f64)>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuValue {
    Zero,
    Finite(f64),
    Infinite,
    Inconclusive,
}

impl MuValue {
    pub fn label(&self) -> String {
        match self {
            MuValue::Zero => "0".into(),
            MuValue::Finite(v) => format!("{v:.6e}"),
            MuValue::Infinite => "inf".into(),
            MuValue::Inconclusive => "inconclusive".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Analytic,
    NumericLimit,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::NumericLimit => "numeric-limit",
        }
    }
}

/// Exponents of `t`, `log t`, `log log t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub power: f64,
    pub log: f64,
    pub loglog: f64,
}

impl Exponents {
    /// Sign of the product `t^a (log t)^b (log log t)^c` as `t → ∞`:
    /// the first nonzero exponent decides.
    fn trend(&self) -> i8 {
        for e in [self.power, self.log, self.loglog] {
            if e > EXP_EPS {
                return 1;
            }
            if e < -EXP_EPS {
                return -1;
            }
        }
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuEstimate {
    pub value: MuValue,
    pub method: Method,
    /// exponents of `Σ²/F⁻¹²`, when known
    pub exponents: Option<Exponents>,
    pub numeric_slope: Option<f64>,
    pub numeric_value: MuValue,
}

impl MuEstimate {
    /// Analytic and numeric verdicts do not contradict each other. A numeric
    /// slope too close to zero to decide is compatible with anything.
    pub fn consistent(&self) -> bool {
        match (self.value, self.numeric_value) {
            (_, MuValue::Finite(_)) | (_, MuValue::Inconclusive) => true,
            (a, b) => a == b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumVerdict {
    Finite,
    Infinite,
    Inconclusive,
}

impl SumVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            SumVerdict::Finite => "finite",
            SumVerdict::Infinite => "infinite",
            SumVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfRecord {
    pub eps: f64,
    pub h: f64,
    pub verdict: SumVerdict,
    /// `(N, Σ_{n<=N} Ψ(ε/θ(n)))`
    pub partial_sums: Vec<(u64, f64)>,
    /// exponents of `θ(n)`, when known
    pub exponents: Option<Exponents>,
    /// log-log slope of `θ` over `n ∈ [10³, 10⁴]`
    pub numeric_exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaIntegral {
    pub eps: f64,
    pub verdict: SumVerdict,
    /// integral over the window plus the extrapolated tail, when finite
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeltaOutcome {
    /// `σ ≡ 0` beyond this time; the SDE is an ODE there
    DeterministicBeyond(f64),
    Evaluated {
        /// whether the integral is finite for every `ε` in the grid
        verdict: SumVerdict,
        /// `δ²(s)/s` increasing on the window
        hypothesis_holds: bool,
        /// log-log slope of `δ²(s)/s` over the last three decades
        exponent: f64,
        window: (f64, f64),
        integrals: Vec<DeltaIntegral>,
    },
    Inconclusive(String),
}

#[derive(Debug, Clone, Default)]
pub struct CriterionReport {
    pub det_tail_condition: Option<ConditionCheck>,
    pub det_pointwise_condition: Option<ConditionCheck>,
    pub sigma_l2: Option<bool>,
    pub mu_estimate: Option<MuEstimate>,
    pub sf: Vec<SfRecord>,
    pub delta_test: Option<DeltaOutcome>,
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let d = (hi / lo).log10();
    let n = ((d * per_decade as f64).ceil() as usize).max(1);
    (0..=n)
        .map(|k| {
            if k == n {
                hi
            } else {
                lo * 10f64.powf(d * k as f64 / n as f64)
            }
        })
        .collect()
}

fn envelope_check(series: Vec<(f64, f64)>, envelope: &[(f64, f64)], tol: &Tolerances) -> ConditionCheck {
    let (verdict, decade_sups) = tends_to_zero(envelope, ENVELOPE_THRESHOLD);
    ConditionCheck {
        verdict,
        limit: classify(&series, tol).limit,
        decade_sups,
        series,
        note: None,
    }
}

/// Tail condition `∫ₜ^∞ g / F⁻¹(t) → 0` and pointwise condition
/// `g(t) / f(F⁻¹(t)) → 0`, sampled on `[1, min(t_end, horizon)]`.
pub fn check_det_conditions(
    scale: &DecayScale,
    g: &Perturbation,
    opts: &CriteriaOptions,
) -> Result<(ConditionCheck, ConditionCheck)> {
    let t_end = opts.t_end.min(g.horizon());
    let ts = if t_end > 1.0 {
        log_grid(1.0, t_end, opts.per_decade)
    } else {
        Vec::new()
    };

    let tail = match g.tail_estimate(1.0) {
        Err(Error::TailUndefined(msg)) => ConditionCheck {
            verdict: Verdict::Fails,
            limit: Limit::Inconclusive,
            decade_sups: Vec::new(),
            series: Vec::new(),
            note: Some(msg),
        },
        Err(e) => return Err(e),
        Ok(_) => {
            let mut series = Vec::with_capacity(ts.len());
            let mut envelope = Vec::with_capacity(ts.len());
            for &t in &ts {
                let e = g.tail_estimate(t)?;
                let fi = scale.f_inv(t);
                series.push((t, e.value / fi));
                envelope.push((t, (e.value.abs() + e.bound) / fi));
            }
            envelope_check(series, &envelope, &opts.tolerances)
        }
    };

    let series: Vec<(f64, f64)> = ts.iter().map(|&t| (t, g.g(t) / scale.ff_inv(t))).collect();
    let pointwise = envelope_check(series.clone(), &series, &opts.tolerances);
    Ok((tail, pointwise))
}

/// `Σ(t) = √(2 ς loglog(1/ς))`, defined for `ς < e^{-1}`.
fn sigma_lil(varsigma: f64) -> Option<f64> {
    if varsigma > 0.0 && varsigma < (-1.0f64).exp() {
        Some((2.0 * varsigma * (1.0 / varsigma).ln().ln()).sqrt())
    } else {
        None
    }
}

fn power_gamma(sigma: &NoiseIntensity) -> Option<f64> {
    match sigma.kind() {
        NoiseKind::PowerDecay { c, gamma } if *c != 0.0 => Some(*gamma),
        _ => None,
    }
}

/// `μ = lim Σ(t)/F⁻¹(t)`.
pub fn compute_mu(scale: &DecayScale, sigma: &NoiseIntensity) -> Result<MuEstimate> {
    if !sigma.is_square_integrable() {
        return Err(Error::NotSquareIntegrable {
            gamma: power_gamma(sigma).unwrap_or(f64::NAN),
        });
    }
    if sigma.switch_off_time().is_some() {
        return Ok(MuEstimate {
            value: MuValue::Zero,
            method: Method::Analytic,
            exponents: None,
            numeric_slope: None,
            numeric_value: MuValue::Zero,
        });
    }

    let model = scale.model();
    let bm1 = model.beta() - 1.0;
    let exponents = power_gamma(sigma).map(|gamma| {
        let (b1, b2) = match model.family() {
            Family::PurePower => (0.0, 0.0),
            Family::PowerLogLoglog => (model.beta1(), model.beta2()),
        };
        Exponents {
            power: 1.0 - 2.0 * gamma + 2.0 / bm1,
            log: 2.0 * b1 / bm1,
            loglog: 1.0 + 2.0 * b2 / bm1,
        }
    });

    // numeric: slope of log(Σ/F⁻¹) against log t over [1e9, 1e12]
    let (t0, t1) = (1e9, 1e12);
    let ratio = |t: f64| sigma_lil(sigma.varsigma_unchecked(t)).map(|s| s / scale.f_inv(t));
    let (numeric_slope, numeric_value) = match (ratio(t0), ratio(t1)) {
        (Some(r0), Some(r1)) if r0 > 0.0 && r1 > 0.0 => {
            let slope = (r1 / r0).ln() / (t1 / t0).ln();
            let v = if slope < -SLOPE_TOL {
                MuValue::Zero
            } else if slope > SLOPE_TOL {
                MuValue::Infinite
            } else {
                MuValue::Finite(r1)
            };
            (Some(slope), v)
        }
        _ => (None, MuValue::Inconclusive),
    };

    let (value, method) = match exponents {
        Some(e) => {
            let v = match e.trend() {
                -1 => MuValue::Zero,
                1 => MuValue::Infinite,
                _ => match numeric_value {
                    MuValue::Inconclusive => MuValue::Inconclusive,
                    _ => MuValue::Finite(ratio(t1).unwrap_or(f64::NAN)),
                },
            };
            (v, Method::Analytic)
        }
        None => (numeric_value, Method::NumericLimit),
    };
    Ok(MuEstimate {
        value,
        method,
        exponents,
        numeric_slope,
        numeric_value,
    })
}

const SF_CHECKPOINTS: [u64; 3] = [100, 1_000, 10_000];

/// `θ(n)² = ∫_{nh}^{(n+1)h} σ² / f(F⁻¹(nh))²`.
pub fn theta(scale: &DecayScale, sigma: &NoiseIntensity, n: u64, h: f64) -> f64 {
    let a = n as f64 * h;
    sigma.energy(a, a + h).max(0.0).sqrt() / scale.ff_inv(a)
}

/// Partial sums of `S_f(ε, h) = Σ Ψ(ε/θ(n))` and the tail verdict.
pub fn sum_sf(scale: &DecayScale, sigma: &NoiseIntensity, eps: f64, h: f64) -> Result<SfRecord> {
    if !(eps > 0.0 && eps.is_finite() && h > 0.0 && h.is_finite()) {
        return Err(crate::error::domain(format!(
            "S_f needs eps > 0 and h > 0, got eps = {eps}, h = {h}"
        )));
    }
    let n_max = *SF_CHECKPOINTS.last().unwrap();
    let mut partial_sums = Vec::new();
    let mut acc = 0.0;
    let mut th = [0.0; 2];
    for n in 0..=n_max {
        let t = theta(scale, sigma, n, h);
        let term = if t > 0.0 { psi(eps / t) } else { 0.0 };
        acc += term;
        if n == 1_000 {
            th[0] = t;
        }
        if n == n_max {
            th[1] = t;
        }
        if SF_CHECKPOINTS.contains(&n) {
            partial_sums.push((n, acc));
        }
    }
    let numeric_exponent = if th[0] > 0.0 && th[1] > 0.0 {
        (th[1] / th[0]).ln() / 10f64.ln()
    } else {
        f64::NEG_INFINITY
    };

    let model = scale.model();
    let bm1 = model.beta() - 1.0;
    let exponents = power_gamma(sigma).map(|gamma| {
        let (b1, b2) = match model.family() {
            Family::PurePower => (0.0, 0.0),
            Family::PowerLogLoglog => (model.beta1(), model.beta2()),
        };
        Exponents {
            power: -gamma + model.beta() / bm1,
            log: b1 / bm1,
            loglog: b2 / bm1,
        }
    });
    let verdict = if sigma.switch_off_time().is_some() {
        SumVerdict::Finite
    } else {
        match exponents {
            Some(e) if e.power < -EXP_EPS => SumVerdict::Finite,
            // θ bounded away from zero: terms do not vanish
            Some(e) if e.trend() >= 0 => SumVerdict::Infinite,
            // θ → 0 slower than any power
            Some(_) => SumVerdict::Inconclusive,
            None => SumVerdict::Inconclusive,
        }
    };
    Ok(SfRecord {
        eps,
        h,
        verdict,
        partial_sums,
        exponents,
        numeric_exponent,
    })
}

/// `ς⁻¹(τ)` by bisection in `log(1+t)`. Needs `0 < τ < ς(0)`.
pub fn varsigma_inverse(sigma: &NoiseIntensity, tau: f64) -> Option<f64> {
    let vs = |t: f64| sigma.varsigma_unchecked(t);
    if !(tau > 0.0 && tau < vs(0.0)) {
        return None;
    }
    let mut hi = 1.0;
    while vs(hi) > tau {
        hi *= 1e3;
        if !hi.is_finite() || hi > 1e300 {
            return None;
        }
    }
    let (mut a, mut b) = (0.0f64, hi.ln_1p());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if vs(m.exp_m1()) > tau {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * b.max(1.0) {
            break;
        }
    }
    Some((0.5 * (a + b)).exp_m1())
}

/// `δ(s) = s F⁻¹(ς⁻¹(1/s))`.
pub fn delta(scale: &DecayScale, sigma: &NoiseIntensity, s: f64) -> Option<f64> {
    varsigma_inverse(sigma, 1.0 / s).map(|t| s * scale.f_inv(t))
}

const DELTA_S_MAX: f64 = 1e12;

/// Integral test `∫ (1/s) exp(-ε² δ²(s)/s) ds < ∞` for each `ε`.
///
/// The integral runs over a window `[s₀, 10¹²]`; beyond it `δ²/s` is
/// extended as a power with the slope of the last three decades, whose tail
/// integral is bounded by `e^{-A} ln(1 + 1/A) / α`.
pub fn delta_integral_test(scale: &DecayScale, sigma: &NoiseIntensity, eps_grid: &[f64]) -> Result<DeltaOutcome> {
    if !sigma.is_square_integrable() {
        return Err(Error::NotSquareIntegrable {
            gamma: power_gamma(sigma).unwrap_or(f64::NAN),
        });
    }
    if let Some(t) = sigma.switch_off_time() {
        return Ok(DeltaOutcome::DeterministicBeyond(t));
    }
    let v0 = sigma.varsigma_unchecked(0.0);
    if !(v0 > 0.0) {
        return Ok(DeltaOutcome::DeterministicBeyond(0.0));
    }
    let s_lo = 10f64.max(10.0 / v0);
    if (DELTA_S_MAX / s_lo).log10() < 3.0 {
        return Ok(DeltaOutcome::Inconclusive(format!(
            "window [{s_lo:.3e}, {DELTA_S_MAX:.0e}] shorter than three decades"
        )));
    }
    let psi_of = |s: f64| delta(scale, sigma, s).map(|d| d * d / s);

    let grid = log_grid(s_lo, DELTA_S_MAX, 8);
    let mut values = Vec::with_capacity(grid.len());
    for &s in &grid {
        match psi_of(s) {
            Some(v) if v.is_finite() && v > 0.0 => values.push(v),
            _ => {
                return Ok(DeltaOutcome::Inconclusive(format!(
                    "varsigma inverse unavailable at s = {s:.3e}"
                )))
            }
        }
    }
    let hypothesis_holds = values.windows(2).all(|w| w[1] >= w[0]);
    let psi_end = *values.last().unwrap();
    let psi_mid = psi_of(DELTA_S_MAX / 1e3).unwrap();
    let exponent = (psi_end / psi_mid).ln() / 1e3f64.ln();

    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-8,
        max_intervals: 400,
    };
    let mut integrals = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let e2 = eps * eps;
        let window = integrate(
            |u| psi_of(u.exp()).map_or(0.0, |p| (-e2 * p).exp()),
            s_lo.ln(),
            DELTA_S_MAX.ln(),
            opts,
        );
        let (verdict, value) = if exponent > SLOPE_TOL {
            let a = e2 * psi_end;
            let tail = (-a).exp() * (1.0 + 1.0 / a).ln() / exponent;
            (SumVerdict::Finite, window.value + tail)
        } else if exponent < -SLOPE_TOL {
            (SumVerdict::Infinite, f64::INFINITY)
        } else {
            (SumVerdict::Inconclusive, f64::NAN)
        };
        integrals.push(DeltaIntegral { eps, verdict, value });
    }
    let verdict = if integrals.iter().all(|i| i.verdict == SumVerdict::Finite) {
        SumVerdict::Finite
    } else if integrals.iter().any(|i| i.verdict == SumVerdict::Infinite) {
        SumVerdict::Infinite
    } else {
        SumVerdict::Inconclusive
    };
    Ok(DeltaOutcome::Evaluated {
        verdict,
        hypothesis_holds,
        exponent,
        window: (s_lo, DELTA_S_MAX),
        integrals,
    })
}

/// Every applicable condition. With `σ ∉ L²` the noise criteria are skipped.
pub fn evaluate(
    scale: &DecayScale,
    g: Option<&Perturbation>,
    sigma: Option<&NoiseIntensity>,
    opts: &CriteriaOptions,
) -> Result<CriterionReport> {
    let mut report = CriterionReport::default();
    if let Some(g) = g {
        let (tail, pointwise) = check_det_conditions(scale, g, opts)?;
        report.det_tail_condition = Some(tail);
        report.det_pointwise_condition = Some(pointwise);
    }
    if let Some(sigma) = sigma {
        let l2 = sigma.is_square_integrable();
        report.sigma_l2 = Some(l2);
        if l2 {
            report.mu_estimate = Some(compute_mu(scale, sigma)?);
            for &h in &opts.h_list {
                for &eps in &opts.eps_grid {
                    report.sf.push(sum_sf(scale, sigma, eps, h)?);
                }
            }
            report.delta_test = Some(delta_integral_test(scale, sigma, &opts.eps_grid)?);
        }
    }
    Ok(report)
}

impl CriterionReport {
    /// Flat `key=value` lines in a fixed order.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
        for (name, c) in [
            ("det_tail_condition", &self.det_tail_condition),
            ("det_pointwise_condition", &self.det_pointwise_condition),
        ] {
            if let Some(c) = c {
                push(name, c.verdict.label().into());
                push(&format!("{name}.limit"), c.limit.label());
                let sups: Vec<String> = c.decade_sups.iter().map(|v| format!("{v:.6e}")).collect();
                push(&format!("{name}.decade_sups"), sups.join(","));
                if let Some(n) = &c.note {
                    push(&format!("{name}.note"), n.clone());
                }
            }
        }
        if let Some(l2) = self.sigma_l2 {
            push("sigma_L2", l2.to_string());
            if !l2 {
                push("downstream", "skipped".into());
            }
        }
        if let Some(mu) = &self.mu_estimate {
            push("mu", mu.value.label());
            push("mu.method", mu.method.label().into());
            if let Some(e) = mu.exponents {
                push(
                    "mu.exponents",
                    format!("{:.6},{:.6},{:.6}", e.power, e.log, e.loglog),
                );
            }
            if let Some(s) = mu.numeric_slope {
                push("mu.numeric_slope", format!("{s:.6}"));
            }
            push("mu.numeric", mu.numeric_value.label());
        }
        for r in &self.sf {
            let key = format!("Sf[eps={},h={}]", r.eps, r.h);
            push(&key, r.verdict.label().into());
            let sums: Vec<String> = r
                .partial_sums
                .iter()
                .map(|(n, s)| format!("{n}:{s:.6e}"))
                .collect();
            push(&format!("{key}.partial_sums"), sums.join(","));
            if let Some(e) = r.exponents {
                push(&format!("{key}.theta_exponent"), format!("{:.6}", e.power));
            }
            push(
                &format!("{key}.numeric_exponent"),
                format!("{:.6}", r.numeric_exponent),
            );
        }
        match &self.delta_test {
            None => {}
            Some(DeltaOutcome::DeterministicBeyond(t)) => {
                push("delta_test", format!("deterministic beyond {t}"));
            }
            Some(DeltaOutcome::Inconclusive(msg)) => {
                push("delta_test", "inconclusive".into());
                push("delta_test.note", msg.clone());
            }
            Some(DeltaOutcome::Evaluated {
                verdict,
                hypothesis_holds,
                exponent,
                window,
                integrals,
            }) => {
                push("delta_test", verdict.label().into());
                push(
                    "delta_test.hypothesis",
                    if *hypothesis_holds { "holds" } else { "violated" }.into(),
                );
                push("delta_test.exponent", format!("{exponent:.6}"));
                push("delta_test.window", format!("{:.6e},{:.6e}", window.0, window.1));
                for i in integrals {
                    push(
                        &format!("delta_test[eps={}]", i.eps),
                        format!("{} {:.6e}", i.verdict.label(), i.value),
                    );
                }
            }
        }
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::NonlinearityModel;
    use crate::perturbations::{GammaSpec, Oscillator, PerturbationKind};
    use std::sync::Arc;
    use proptest::prelude::*;

    fn cube() -> DecayScale {
        DecayScale::new(NonlinearityModel::pure_power(1.0, 3.0).unwrap()).unwrap()
    }

    fn power_scale(beta: f64) -> DecayScale {
        DecayScale::new(NonlinearityModel::pure_power(1.0, beta).unwrap()).unwrap()
    }

    #[test]
    fn psi_properties() {
        assert_eq!(psi(0.0), 0.5);
        assert!(psi(6.0) < 1e-8);
        let mut prev = psi(-5.0);
        for k in -49..=100 {
            let x = k as f64 * 0.1;
            let v = psi(x);
            assert!(v < prev);
            prev = v;
        }
        assert!((psi(1.0) + psi(-1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn det_power_decay_holds() {
        let scale = cube();
        let g = Perturbation::power_decay(2.0, 3.0, f64::INFINITY).unwrap();
        let (tail, pointwise) = check_det_conditions(&scale, &g, &CriteriaOptions::default()).unwrap();
        assert_eq!(tail.verdict, Verdict::Holds);
        assert_eq!(pointwise.verdict, Verdict::Holds);
        // oracle: (1+t)^-2 / (1+2t)^-1/2
        for &(t, r) in &tail.series {
            let want = (1.0 + t).powi(-2) * (1.0 + 2.0 * t).sqrt();
            assert!((r - want).abs() <= 1e-9 * want);
        }
    }

    #[test]
    fn det_scaled_rate_fails_with_limit_one() {
        let scale = Arc::new(cube());
        let g = Perturbation::new(
            PerturbationKind::ScaledDerivativeRate {
                c: 1.0,
                scale: scale.clone(),
            },
            f64::INFINITY,
        )
        .unwrap();
        let (tail, pointwise) = check_det_conditions(&scale, &g, &CriteriaOptions::default()).unwrap();
        assert_eq!(pointwise.verdict, Verdict::Fails);
        assert_eq!(pointwise.limit, Limit::Class(1));
        assert_eq!(tail.verdict, Verdict::Fails);
    }

    #[test]
    fn det_oscillating_tail_holds() {
        let scale = cube();
        let osc = Oscillator::new(GammaSpec::OnePlusT, 3).unwrap();
        let g = Perturbation::new(PerturbationKind::Oscillating(osc), f64::INFINITY).unwrap();
        let opts = CriteriaOptions {
            t_end: 1e4,
            ..Default::default()
        };
        let (tail, _) = check_det_conditions(&scale, &g, &opts).unwrap();
        assert_eq!(tail.verdict, Verdict::Holds);
    }

    #[test]
    fn det_divergent_tail_fails_and_short_is_inconclusive() {
        let scale = cube();
        let g = Perturbation::power_decay(1.0, 0.5, f64::INFINITY).unwrap();
        let (tail, _) = check_det_conditions(&scale, &g, &CriteriaOptions::default()).unwrap();
        assert_eq!(tail.verdict, Verdict::Fails);
        assert!(tail.note.is_some());
        let g = Perturbation::power_decay(2.0, 3.0, f64::INFINITY).unwrap();
        let opts = CriteriaOptions {
            t_end: 100.0,
            ..Default::default()
        };
        let (tail, pointwise) = check_det_conditions(&scale, &g, &opts).unwrap();
        assert_eq!(tail.verdict, Verdict::Inconclusive);
        assert_eq!(pointwise.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn mu_examples() {
        let scale = cube();
        let mu = |gamma: f64| compute_mu(&scale, &NoiseIntensity::power_decay(1.0, gamma).unwrap()).unwrap();
        assert_eq!(mu(2.5).value, MuValue::Zero);
        assert_eq!(mu(0.9).value, MuValue::Infinite);
        assert_eq!(mu(1.0).value, MuValue::Infinite);
        for g in [0.7, 0.9, 1.3, 2.5] {
            let m = mu(g);
            assert_eq!(m.method, Method::Analytic);
            assert!(m.consistent(), "{g}: {m:?}");
            // numeric slope against the exponent (the loglog factor is slow)
            let want = 0.5 * m.exponents.unwrap().power;
            assert!((m.numeric_slope.unwrap() - want).abs() < 0.02, "{g} {m:?}");
        }
        assert!(compute_mu(&scale, &NoiseIntensity::power_decay(1.0, 0.4).unwrap()).is_err());
        assert_eq!(compute_mu(&scale, &NoiseIntensity::zero()).unwrap().value, MuValue::Zero);
    }

    #[test]
    fn mu_log_family_boundary() {
        // β = 3, γ = 1: power exponent vanishes, β₁ = -1 gives log exponent -1
        let m = NonlinearityModel::power_log_loglog(1.0, 3.0, -1.0, 0.0).unwrap();
        let scale = DecayScale::new(m).unwrap();
        let est = compute_mu(&scale, &NoiseIntensity::power_decay(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(est.value, MuValue::Zero);
        let m = NonlinearityModel::power_log_loglog(1.0, 3.0, 1.0, 0.0).unwrap();
        let scale = DecayScale::new(m).unwrap();
        let est = compute_mu(&scale, &NoiseIntensity::power_decay(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(est.value, MuValue::Infinite);
    }

    #[test]
    fn sf_examples() {
        let scale = cube();
        let s = NoiseIntensity::power_decay(1.0, 2.5).unwrap();
        for eps in [0.1, 1.0, 10.0] {
            let r = sum_sf(&scale, &s, eps, 1.0).unwrap();
            assert_eq!(r.verdict, SumVerdict::Finite);
            assert!((r.exponents.unwrap().power + 1.0).abs() < 1e-12);
            assert!((r.numeric_exponent + 1.0).abs() < 0.01);
        }
        let s = NoiseIntensity::power_decay(1.0, 1.5).unwrap();
        let r = sum_sf(&scale, &s, 1.0, 1.0).unwrap();
        assert_eq!(r.verdict, SumVerdict::Infinite);
        // terms tend to a positive constant, so the partial sums grow linearly
        let (s3, s4) = (r.partial_sums[1].1, r.partial_sums[2].1);
        assert!(s4 > 5.0 * s3);
        // growing θ: terms tend to Ψ(0) = 1/2
        let s = NoiseIntensity::power_decay(1.0, 0.8).unwrap();
        let r = sum_sf(&scale, &s, 1.0, 1.0).unwrap();
        assert_eq!(r.verdict, SumVerdict::Infinite);
        let last = r.partial_sums[2].1 - r.partial_sums[1].1;
        assert!((last / 9000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn theta_oracle() {
        // f = x³: f(F⁻¹(t)) = (1+2t)^{-3/2}
        let scale = cube();
        let s = NoiseIntensity::power_decay(2.0, 2.0).unwrap();
        for n in [0u64, 5, 1000] {
            let h = 0.5;
            let a = n as f64 * h;
            let energy = 4.0 * ((1.0 + a).powi(-3) - (1.0 + a + h).powi(-3)) / 3.0;
            let want = energy.sqrt() * (1.0 + 2.0 * a).powf(1.5);
            assert!((theta(&scale, &s, n, h) - want).abs() < 1e-10 * want);
        }
    }

    #[test]
    fn varsigma_inverse_oracle() {
        let s = NoiseIntensity::power_decay(1.5, 1.2).unwrap();
        for tau in [1e-1f64, 1e-4, 1e-10, 1e-30] {
            let want = (tau * 1.4 / 2.25).powf(-1.0 / 1.4) - 1.0;
            let got = varsigma_inverse(&s, tau).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{tau}: {got} {want}");
        }
        assert!(varsigma_inverse(&s, 10.0).is_none());
    }

    #[test]
    fn delta_examples() {
        let scale = cube();
        let eps = [0.1, 1.0, 10.0];
        match delta_integral_test(&scale, &NoiseIntensity::power_decay(1.0, 2.5).unwrap(), &eps).unwrap() {
            DeltaOutcome::Evaluated {
                verdict,
                hypothesis_holds,
                exponent,
                integrals,
                ..
            } => {
                assert_eq!(verdict, SumVerdict::Finite);
                assert!(hypothesis_holds);
                // ψ ~ s^{1 - 2/((2γ-1)(β-1))}
                assert!((exponent - 0.75).abs() < 0.01, "{exponent}");
                assert!(integrals.iter().all(|i| i.value.is_finite()));
            }
            other => panic!("{other:?}"),
        }
        match delta_integral_test(&scale, &NoiseIntensity::power_decay(1.0, 0.9).unwrap(), &eps).unwrap() {
            DeltaOutcome::Evaluated {
                verdict,
                hypothesis_holds,
                integrals,
                ..
            } => {
                assert_eq!(verdict, SumVerdict::Infinite);
                assert!(!hypothesis_holds);
                assert_eq!(integrals[0].verdict, SumVerdict::Infinite);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            delta_integral_test(&scale, &NoiseIntensity::zero(), &eps).unwrap(),
            DeltaOutcome::DeterministicBeyond(0.0)
        );
    }

    #[test]
    fn delta_oracle() {
        // closed form: ς⁻¹(1/s) = (s(2γ-1)/c²)^{1/(2γ-1)} - 1, F⁻¹(t) = (1+2t)^{-1/2}
        let scale = cube();
        let s = NoiseIntensity::power_decay(1.0, 2.0).unwrap();
        for x in [1e2, 1e5, 1e9] {
            let t = (x / 3.0f64).powf(1.0 / 3.0) - 1.0;
            let want = x / (1.0 + 2.0 * t).sqrt();
            let got = delta(&scale, &s, x).unwrap();
            assert!((got - want).abs() < 1e-9 * want);
        }
    }

    #[test]
    fn report_skips_downstream_when_not_l2() {
        let scale = cube();
        let s = NoiseIntensity::power_decay(1.0, 0.4).unwrap();
        let r = evaluate(&scale, None, Some(&s), &CriteriaOptions::default()).unwrap();
        assert_eq!(r.sigma_l2, Some(false));
        assert!(r.mu_estimate.is_none() && r.sf.is_empty() && r.delta_test.is_none());
        let kv = r.key_values();
        assert!(kv.contains(&("downstream".into(), "skipped".into())));
    }

    fn near(x: f64, threshold: f64) -> bool {
        (x - threshold).abs() < 0.05
    }

    #[test]
    fn coherence_grid() {
        for beta in [1.5, 2.0, 3.0, 5.0] {
            let scale = power_scale(beta);
            let mu_t = (beta + 1.0) / (2.0 * (beta - 1.0));
            let sf_t = beta / (beta - 1.0);
            for k in 0..13 {
                let gamma = 0.6 + 0.2 * k as f64;
                if near(gamma, 0.5) || near(gamma, mu_t) || near(gamma, sf_t) {
                    continue;
                }
                let s = NoiseIntensity::power_decay(1.0, gamma).unwrap();
                assert!(s.is_square_integrable());
                let mu = compute_mu(&scale, &s).unwrap();
                assert_eq!(mu.value == MuValue::Zero, gamma > mu_t, "{beta} {gamma}");
                assert!(mu.consistent(), "{beta} {gamma}: {mu:?}");
                let sf = sum_sf(&scale, &s, 1.0, 1.0).unwrap();
                assert_eq!(sf.verdict == SumVerdict::Finite, gamma > sf_t);
                if sf.verdict == SumVerdict::Finite {
                    assert_eq!(mu.value, MuValue::Zero);
                }
                match delta_integral_test(&scale, &s, &[0.1, 1.0, 10.0]).unwrap() {
                    DeltaOutcome::Evaluated { verdict, .. } => {
                        assert_eq!(verdict == SumVerdict::Finite, mu.value == MuValue::Zero, "{beta} {gamma}");
                    }
                    other => panic!("{other:?}"),
                }
            }
        }
    }

    proptest! {
        #[test]
        fn psi_decreasing_and_symmetric(x in -8.0f64..8.0, dx in 1e-3f64..1.0) {
            prop_assert!(psi(x + dx) < psi(x));
            prop_assert!((psi(x) + psi(-x) - 1.0).abs() < 1e-14);
        }

        #[test]
        fn varsigma_inverse_round_trip(c in 0.1f64..3.0, gamma in 0.55f64..4.0, lt in -30.0f64..-0.5) {
            let s = NoiseIntensity::power_decay(c, gamma).unwrap();
            let tau = 10f64.powf(lt) * s.varsigma(0.0).unwrap();
            let t = varsigma_inverse(&s, tau).unwrap();
            prop_assert!((s.varsigma(t).unwrap() / tau - 1.0).abs() < 1e-9);
        }
    }
}
