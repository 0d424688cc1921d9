//! Deterministic forcings `g(t)` and noise intensities `σ(t)`, with their
//! tail integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::decay_scale::DecayScale;
use crate::error::{domain, Error, Result};
use crate::nonlinearity::NonlinearityModel;
use crate::quad::{integrate, QuadOptions};
use crate::table::SampledTable;

/// A value together with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub bound: f64,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Self { value, bound: 0.0 }
    }
}

/// Growth function `Γ`, increasing to infinity.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSpec {
    /// `Γ(t) = t`
    Linear,
    /// `Γ(t) = 1 + t`
    OnePlusT,
    /// `Γ(t) = t²`
    Square,
    /// `Γ(t) = e^t`
    Exp,
    /// Piecewise linear from `t = 0`, extended with the last slope.
    Table(SampledTable),
}

impl GammaSpec {
    pub fn table(table: SampledTable) -> Result<Self> {
        if table.t_min() != 0.0 {
            return Err(Error::Table("growth table must start at t = 0".into()));
        }
        if table.values().windows(2).any(|w| w[1] < w[0]) || table.slope_at_end() <= 0.0 {
            return Err(Error::Table(
                "growth table must be nondecreasing with a positive final slope".into(),
            ));
        }
        Ok(GammaSpec::Table(table))
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            GammaSpec::Linear => t,
            GammaSpec::OnePlusT => 1.0 + t,
            GammaSpec::Square => t * t,
            GammaSpec::Exp => t.exp(),
            GammaSpec::Table(tab) => tab.eval(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            GammaSpec::Linear | GammaSpec::OnePlusT => 1.0,
            GammaSpec::Square => 2.0 * t,
            GammaSpec::Exp => t.exp(),
            GammaSpec::Table(tab) => {
                let h = 1e-9 * (1.0 + t.abs());
                (tab.eval(t + h) - tab.eval(t - h)) / (2.0 * h)
            }
        }
    }

    /// `I(t) = ∫₀ᵗ Γ`.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            GammaSpec::Linear => 0.5 * t * t,
            GammaSpec::OnePlusT => t + 0.5 * t * t,
            GammaSpec::Square => t * t * t / 3.0,
            GammaSpec::Exp => t.exp_m1(),
            GammaSpec::Table(tab) => {
                let inside = tab.integral(0.0, t);
                if t > tab.t_max() {
                    inside + 0.5 * (tab.eval(tab.t_max()) + tab.eval(t)) * (t - tab.t_max())
                } else {
                    inside
                }
            }
        }
    }
}

/// `Γ(t) sin(I(t)ⁿ)`: sign-changing forcing whose tail integral is
/// conditionally convergent.
///
/// Substituting `v = I(s)` turns `∫ₜ^∞ g` into `∫_{I(t)}^∞ sin(vⁿ) dv`, which
/// depends on `t` only through `I(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Oscillator {
    gamma: GammaSpec,
    n: u32,
}

// beyond this phase the tail is taken from its asymptotic expansion
const OSC_ASYMPTOTIC_PHASE: f64 = 64.0;
// phases at which the integral of |g| switches to its period average
const OSC_ABS_PERIODS: f64 = 2000.0;

impl Oscillator {
    pub fn new(gamma: GammaSpec, n: u32) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("oscillator power must be at least 2, got {n}")));
        }
        Ok(Self { gamma, n })
    }

    /// Smallest integer `n >= (2β-1)/(β-1)`.
    pub fn default_power(beta: f64) -> u32 {
        (((2.0 * beta - 1.0) / (beta - 1.0)) - 1e-12).ceil().max(2.0) as u32
    }

    pub fn gamma(&self) -> &GammaSpec {
        &self.gamma
    }
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn phase(&self, t: f64) -> f64 {
        self.gamma.integral(t).powi(self.n as i32)
    }

    /// `d/dt I(t)ⁿ`.
    pub fn phase_rate(&self, t: f64) -> f64 {
        let n = self.n as i32;
        n as f64 * self.gamma.integral(t).powi(n - 1) * self.gamma.value(t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.gamma.value(t) * self.phase(t).sin()
    }

    /// `k(u) = u^{-(1-1/n)}/n` at `u = I(t)ⁿ`, the amplitude of the tail.
    pub fn envelope(&self, t: f64) -> f64 {
        let i = self.gamma.integral(t);
        i.powi(1 - self.n as i32) / self.n as f64
    }

    fn k_derivative(&self, m: u32, u: f64) -> f64 {
        // k^{(m)}(u) = (-1)^m (α)_m u^{-α-m} / n with α = 1 - 1/n
        let alpha = 1.0 - 1.0 / self.n as f64;
        let mut poch = 1.0;
        for j in 0..m {
            poch *= alpha + j as f64;
        }
        let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * poch * u.powf(-alpha - m as f64) / self.n as f64
    }

    /// `∫_U^∞ k(u) sin u du` by repeated integration by parts. The remainder
    /// after `M` pairs is `±∫_U^∞ k^{(2M)} sin`, bounded by `2|k^{(2M)}(U)|`.
    fn asymptotic_tail(&self, u: f64) -> Estimate {
        let (s, c) = u.sin_cos();
        let mut value = 0.0;
        let mut last = f64::INFINITY;
        let mut m = 0;
        loop {
            let even = self.k_derivative(2 * m, u);
            if even.abs() > last || m == 16 {
                break;
            }
            let odd = self.k_derivative(2 * m + 1, u);
            let term = even * c - odd * s;
            value += if m % 2 == 0 { term } else { -term };
            last = even.abs();
            m += 1;
        }
        let rem = 2.0 * self.k_derivative(2 * m, u).abs();
        // the phase itself is only known to about u·ε
        if u * f64::EPSILON > 1e-3 {
            let amp = self.k_derivative(0, u).hypot(self.k_derivative(1, u));
            return Estimate {
                value: 0.0,
                bound: amp + rem,
            };
        }
        Estimate { value, bound: rem }
    }

    /// `∫_V^∞ sin(vⁿ) dv`.
    fn tail_from(&self, v: f64) -> Estimate {
        let n = self.n as i32;
        let u = v.powi(n);
        if u >= OSC_ASYMPTOTIC_PHASE {
            return self.asymptotic_tail(u);
        }
        let v_star = OSC_ASYMPTOTIC_PHASE.powf(1.0 / self.n as f64);
        let near = integrate(
            |s| s.powi(n).sin(),
            v,
            v_star,
            QuadOptions {
                abs_tol: 1e-15,
                rel_tol: 1e-13,
                max_intervals: 2000,
            },
        );
        let far = self.asymptotic_tail(OSC_ASYMPTOTIC_PHASE);
        Estimate {
            value: near.value + far.value,
            bound: near.error + far.bound,
        }
    }

    pub fn tail(&self, t: f64) -> Estimate {
        self.tail_from(self.gamma.integral(t))
    }

    /// `∫₀ᵀ |g| = ∫₀^{I(T)} |sin(vⁿ)| dv`: summed period by period up to a
    /// fixed number of periods, then replaced by the period average `2/π`
    /// times the length, with the telescoping bound `(π+2) k(U)`.
    pub fn abs_integral(&self, t: f64) -> Estimate {
        let n = self.n as i32;
        let inv = 1.0 / self.n as f64;
        let v_end = self.gamma.integral(t);
        let u_end = v_end.powi(n);
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-12,
            max_intervals: 200,
        };
        let j_sw = (u_end / PI).floor().min(OSC_ABS_PERIODS) as u64;
        let mut acc = 0.0;
        let mut err = 0.0;
        let mut lo = 0.0;
        for j in 1..=j_sw {
            let hi = (j as f64 * PI).powf(inv);
            let r = integrate(|s| s.powi(n).sin().abs(), lo, hi, opts);
            acc += r.value;
            err += r.error;
            lo = hi;
        }
        if (j_sw as f64) < OSC_ABS_PERIODS {
            let r = integrate(|s| s.powi(n).sin().abs(), lo, v_end, opts);
            return Estimate {
                value: acc + r.value,
                bound: err + r.error,
            };
        }
        let u_sw = lo.powi(n);
        let k_sw = u_sw.powf(inv - 1.0) * inv;
        Estimate {
            value: acc + 2.0 / PI * (v_end - lo),
            bound: err + (PI + 2.0) * k_sw,
        }
    }
}

/// `k_s(t) = c (1+t)^{-p}` with spikes of height `Γ₊` added near each
/// integer, keeping the function C¹ and the tail integral asymptotically
/// unchanged.
///
/// On `[n, n+w_n)` the value is `k_s(t) + h(t-n, w_n/2, Γ₊(t) - k_s(t))` with
/// the cubic bump `h`, and `Γ₊ = Γ + sup k_s + 1`. The widths are
/// `w_n = min(1/2, ∫_{n+1}^{n+2} k_s / ((n+1) Γ₊(n+1)))`; the `1/(n+1)` makes
/// the summed spike excess a vanishing fraction of the base tail.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedFunction {
    c: f64,
    p: f64,
    gamma: GammaSpec,
    sup_base: f64,
}

const SPIKE_TAIL_TERMS: u64 = 2000;

/// Cubic bump on `[0, 2a]` with peak `b` at `x = a`; zero value and slope at
/// both ends.
pub fn bump(x: f64, a: f64, b: f64) -> f64 {
    b * bump_shape(x, a).0
}

/// Shape and its x-derivative for a unit bump.
fn bump_shape(x: f64, a: f64) -> (f64, f64) {
    let y = (x - a) / a;
    if x <= a {
        (1.0 - 3.0 * y * y - 2.0 * y * y * y, (-6.0 * y - 6.0 * y * y) / a)
    } else {
        (1.0 - 3.0 * y * y + 2.0 * y * y * y, (-6.0 * y + 6.0 * y * y) / a)
    }
}

impl SpikedFunction {
    pub fn new(c: f64, p: f64, gamma: GammaSpec) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(domain(format!("spike base scale must be positive, got {c}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::TailUndefined(format!(
                "spike base (1+t)^-{p} is not integrable"
            )));
        }
        // the base is decreasing, so its supremum sits at t = 0
        Ok(Self {
            c,
            p,
            gamma,
            sup_base: c,
        })
    }

    pub fn base(&self, t: f64) -> f64 {
        self.c * (1.0 + t).powf(-self.p)
    }
    pub fn base_derivative(&self, t: f64) -> f64 {
        -self.p * self.c * (1.0 + t).powf(-self.p - 1.0)
    }
    pub fn base_tail(&self, t: f64) -> f64 {
        self.c * (1.0 + t).powf(1.0 - self.p) / (self.p - 1.0)
    }
    fn base_integral(&self, a: f64, b: f64) -> f64 {
        self.base_tail(a) - self.base_tail(b)
    }

    pub fn gamma(&self) -> &GammaSpec {
        &self.gamma
    }

    pub fn gamma_plus(&self, t: f64) -> f64 {
        self.gamma.value(t) + self.sup_base + 1.0
    }

    pub fn width(&self, n: u64) -> f64 {
        let j = n as f64;
        let w = self.base_integral(j + 1.0, j + 2.0) / ((j + 1.0) * self.gamma_plus(j + 1.0));
        w.min(0.5)
    }

    /// Value and derivative of the spike branch on interval `n`, evaluated
    /// at any `t` (used for one-sided seam checks).
    pub fn spike_branch(&self, n: u64, t: f64) -> (f64, f64) {
        self.spike_branch_at_offset(n, t - n as f64)
    }

    /// As `spike_branch`, addressed by the offset `x = t - n` so that the
    /// seams `x = 0` and `x = w_n` are hit exactly.
    pub fn spike_branch_at_offset(&self, n: u64, x: f64) -> (f64, f64) {
        let a = 0.5 * self.width(n);
        let t = n as f64 + x;
        let (sh, dsh) = bump_shape(x, a);
        let b = self.gamma_plus(t) - self.base(t);
        let db = self.gamma.derivative(t) - self.base_derivative(t);
        (
            self.base(t) + sh * b,
            self.base_derivative(t) + dsh * b + sh * db,
        )
    }

    fn locate(&self, t: f64) -> Option<u64> {
        let n = t.floor();
        let n_u = n as u64;
        (t - n < self.width(n_u)).then_some(n_u)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.locate(t) {
            Some(n) => self.spike_branch(n, t).0,
            None => self.base(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self.locate(t) {
            Some(n) => self.spike_branch(n, t).1,
            None => self.base_derivative(t),
        }
    }

    /// Seams of interval `n`: spike start, peak, spike end.
    pub fn seams(&self, n: u64) -> [f64; 3] {
        let w = self.width(n);
        let s = n as f64;
        [s, s + 0.5 * w, s + w]
    }

    /// Largest relative jump in value or slope between the base and the
    /// spike branch at the two outer seams of interval `n`.
    pub fn seam_mismatch(&self, n: u64) -> f64 {
        let [start, _, end] = self.seams(n);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        let (v0, d0) = self.spike_branch_at_offset(n, 0.0);
        let (v1, d1) = self.spike_branch_at_offset(n, self.width(n));
        rel(v0, self.base(start))
            .max(rel(d0, self.base_derivative(start)))
            .max(rel(v1, self.base(end)))
            .max(rel(d1, self.base_derivative(end)))
    }

    /// First seam strictly after `t`.
    pub fn next_seam(&self, t: f64) -> f64 {
        let n = t.floor() as u64;
        for s in self.seams(n) {
            if s > t {
                return s;
            }
        }
        (n + 1) as f64
    }

    /// `∫_{max(from, n)}^{n+w_n} (k - k_s)`.
    fn spike_excess(&self, n: u64, from: f64) -> f64 {
        let s = n as f64;
        let w = self.width(n);
        let lo = from.max(s);
        if lo >= s + w {
            return 0.0;
        }
        let a = 0.5 * w;
        let excess = |t: f64| bump_shape(t - s, a).0 * (self.gamma_plus(t) - self.base(t));
        let opts = QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 50,
        };
        let mid = s + a;
        let mut v = 0.0;
        if lo < mid {
            v += integrate(excess, lo, mid, opts).value;
        }
        v + integrate(excess, lo.max(mid), s + w, opts).value
    }

    /// `∫ₜ^∞ k`: base tail plus spike excesses summed over a fixed number of
    /// intervals; the rest is bounded by `∫_{N+2}^∞ k_s / (2(N+2))`.
    pub fn tail(&self, t: f64) -> Estimate {
        let n0 = t.floor() as u64;
        let n_last = n0 + SPIKE_TAIL_TERMS;
        let mut excess = 0.0;
        for n in n0..=n_last {
            excess += self.spike_excess(n, t);
        }
        let m = (n_last + 2) as f64;
        Estimate {
            value: self.base_tail(t) + excess,
            bound: self.base_tail(m) / (2.0 * m),
        }
    }
}

#[derive(Debug, Clone)]
pub enum PerturbationKind {
    Zero,
    /// `c (1+t)^{-p}`
    PowerDecay { c: f64, p: f64 },
    /// `c f(F⁻¹(t))`
    ScaledDerivativeRate { c: f64, scale: Arc<DecayScale> },
    /// `ξ d'(t) + f(ξ d(t))` with `d(t) = e^{-t²}`, so `x = ξ d` solves the
    /// perturbed equation exactly.
    ZeroLimitSynthetic { xi: f64, model: NonlinearityModel },
    Oscillating(Oscillator),
    Spiked(SpikedFunction),
    /// Linear interpolation of samples; zero tail beyond the last sample.
    Sampled(SampledTable),
}

#[derive(Debug, Clone)]
pub struct Perturbation {
    kind: PerturbationKind,
    factor: f64,
    horizon: f64,
}

impl Perturbation {
    pub fn new(kind: PerturbationKind, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(domain(format!("horizon must be positive, got {horizon}")));
        }
        match &kind {
            PerturbationKind::PowerDecay { c, p } if !(c.is_finite() && p.is_finite()) => {
                return Err(domain("power decay parameters must be finite"));
            }
            PerturbationKind::Sampled(tab) if tab.t_min() > 0.0 || tab.t_max() < horizon => {
                return Err(domain(format!(
                    "sampled forcing covers [{}, {}], horizon is {horizon}",
                    tab.t_min(),
                    tab.t_max()
                )));
            }
            _ => {}
        }
        Ok(Self {
            kind,
            factor: 1.0,
            horizon,
        })
    }

    pub fn zero(horizon: f64) -> Self {
        Self::new(PerturbationKind::Zero, horizon).expect("positive horizon")
    }

    pub fn power_decay(c: f64, p: f64, horizon: f64) -> Result<Self> {
        Self::new(PerturbationKind::PowerDecay { c, p }, horizon)
    }

    pub fn kind(&self) -> &PerturbationKind {
        &self.kind
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// `-g`.
    pub fn negated(&self) -> Self {
        Self {
            factor: -self.factor,
            ..self.clone()
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PerturbationKind::Zero)
    }

    pub fn eval_g(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(domain(format!(
                "g evaluated at t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(self.g(t))
    }

    /// Unchecked evaluation for integrators.
    pub fn g(&self, t: f64) -> f64 {
        let v = match &self.kind {
            PerturbationKind::Zero => 0.0,
            PerturbationKind::PowerDecay { c, p } => c * (1.0 + t).powf(-p),
            PerturbationKind::ScaledDerivativeRate { c, scale } => c * scale.ff_inv(t),
            PerturbationKind::ZeroLimitSynthetic { xi, model } => {
                let d = (-t * t).exp();
                -2.0 * t * xi * d + model.f(xi * d)
            }
            PerturbationKind::Oscillating(o) => o.eval(t),
            PerturbationKind::Spiked(s) => s.eval(t),
            PerturbationKind::Sampled(tab) => tab.eval(t),
        };
        self.factor * v
    }

    /// `∫ₜ^∞ g`.
    pub fn tail_integral_g(&self, t: f64) -> Result<f64> {
        Ok(self.tail_estimate(t)?.value)
    }

    pub fn tail_estimate(&self, t: f64) -> Result<Estimate> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(domain(format!("tail integral needs finite t >= 0, got {t}")));
        }
        let e = match &self.kind {
            PerturbationKind::Zero => Estimate::exact(0.0),
            PerturbationKind::PowerDecay { c, p } => {
                if *p <= 1.0 {
                    return Err(Error::TailUndefined(format!(
                        "tail undefined: (1+t)^-{p} is not integrable"
                    )));
                }
                Estimate::exact(c * (1.0 + t).powf(1.0 - p) / (p - 1.0))
            }
            PerturbationKind::ScaledDerivativeRate { c, scale } => {
                Estimate::exact(c * scale.f_inv(t))
            }
            PerturbationKind::ZeroLimitSynthetic { xi, model } => {
                let r = integrate(
                    |s| model.f(xi * (-s * s).exp()),
                    t,
                    t + 8.0,
                    QuadOptions {
                        abs_tol: 0.0,
                        rel_tol: 1e-12,
                        max_intervals: 500,
                    },
                );
                Estimate {
                    value: -xi * (-t * t).exp() + r.value,
                    bound: r.error,
                }
            }
            PerturbationKind::Oscillating(o) => o.tail(t),
            PerturbationKind::Spiked(s) => s.tail(t),
            PerturbationKind::Sampled(tab) => Estimate::exact(tab.integral(t, tab.t_max())),
        };
        Ok(Estimate {
            value: self.factor * e.value,
            bound: e.bound,
        })
    }

    /// Next time after `t` where the forcing changes branch, if any.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        match &self.kind {
            PerturbationKind::Spiked(s) => Some(s.next_seam(t)),
            _ => None,
        }
    }

    /// Largest step that resolves the forcing near `t`.
    pub fn resolution_step(&self, t: f64) -> f64 {
        match &self.kind {
            PerturbationKind::Oscillating(o) => {
                let rate = o.phase_rate(t);
                if rate > 0.0 {
                    2.0 * PI / (16.0 * rate)
                } else {
                    f64::INFINITY
                }
            }
            PerturbationKind::Sampled(tab) => {
                let ts = tab.times();
                let i = ts.partition_point(|&s| s <= t);
                if i < ts.len() {
                    (ts[i] - t).max(f64::MIN_POSITIVE)
                } else {
                    f64::INFINITY
                }
            }
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    Zero,
    /// `σ(t) = c (1+t)^{-γ}`
    PowerDecay { c: f64, gamma: f64 },
    /// `σ² = k` for a spiked `k`.
    SpikedSquare(SpikedFunction),
    /// Linear interpolation of `σ`; zero beyond the last sample.
    Sampled(SampledTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIntensity {
    kind: NoiseKind,
}

impl NoiseIntensity {
    pub fn new(kind: NoiseKind) -> Result<Self> {
        match &kind {
            NoiseKind::PowerDecay { c, gamma } if !(c.is_finite() && gamma.is_finite()) => {
                return Err(domain("noise parameters must be finite"));
            }
            NoiseKind::Sampled(tab) if tab.t_min() > 0.0 => {
                return Err(domain("sampled noise must start at t = 0"));
            }
            _ => {}
        }
        Ok(Self { kind })
    }

    pub fn zero() -> Self {
        Self {
            kind: NoiseKind::Zero,
        }
    }

    pub fn power_decay(c: f64, gamma: f64) -> Result<Self> {
        Self::new(NoiseKind::PowerDecay { c, gamma })
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn sigma(&self, t: f64) -> f64 {
        match &self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::PowerDecay { c, gamma } => c * (1.0 + t).powf(-gamma),
            NoiseKind::SpikedSquare(s) => s.eval(t).sqrt(),
            NoiseKind::Sampled(tab) => {
                if t > tab.t_max() {
                    0.0
                } else {
                    tab.eval(t)
                }
            }
        }
    }

    pub fn is_square_integrable(&self) -> bool {
        match &self.kind {
            NoiseKind::PowerDecay { c, gamma } => *c == 0.0 || *gamma > 0.5,
            _ => true,
        }
    }

    /// Time beyond which `σ ≡ 0`, if any.
    pub fn switch_off_time(&self) -> Option<f64> {
        match &self.kind {
            NoiseKind::Zero => Some(0.0),
            NoiseKind::PowerDecay { c, .. } if *c == 0.0 => Some(0.0),
            NoiseKind::Sampled(tab) => {
                let ts = tab.times();
                let vs = tab.values();
                let last_nonzero = vs.iter().rposition(|&v| v != 0.0);
                Some(match last_nonzero {
                    None => 0.0,
                    Some(i) if i + 1 < ts.len() => ts[i + 1],
                    Some(_) => tab.t_max(),
                })
            }
            _ => None,
        }
    }

    /// `ς(t) = ∫ₜ^∞ σ²`.
    pub fn varsigma(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(domain(format!("varsigma needs finite t >= 0, got {t}")));
        }
        match &self.kind {
            NoiseKind::PowerDecay { gamma, .. } if !self.is_square_integrable() => {
                Err(Error::NotSquareIntegrable { gamma: *gamma })
            }
            _ => Ok(self.varsigma_unchecked(t)),
        }
    }

    pub(crate) fn varsigma_unchecked(&self, t: f64) -> f64 {
        match &self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::PowerDecay { c, gamma } => {
                c * c * (1.0 + t).powf(1.0 - 2.0 * gamma) / (2.0 * gamma - 1.0)
            }
            NoiseKind::SpikedSquare(s) => s.tail(t).value,
            NoiseKind::Sampled(tab) => tab.integral_of_square(t, tab.t_max()),
        }
    }

    /// `∫_a^b σ²`, computed without cancellation for the power family.
    pub fn energy(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::PowerDecay { c, gamma } => {
                let e = 1.0 - 2.0 * gamma;
                if e == 0.0 {
                    return c * c * ((1.0 + b) / (1.0 + a)).ln();
                }
                // c² (1+a)^e ((1+b)^e/(1+a)^e - 1) / e
                let ratio_ln = ((b - a) / (1.0 + a)).ln_1p();
                c * c * (1.0 + a).powf(e) * (e * ratio_ln).exp_m1() / e
            }
            NoiseKind::SpikedSquare(s) => {
                let opts = QuadOptions {
                    abs_tol: 0.0,
                    rel_tol: 1e-10,
                    max_intervals: 2000,
                };
                // integrate piecewise between seams so spikes are not missed
                let mut acc = 0.0;
                let mut x = a;
                while x < b {
                    let next = s.next_seam(x).min(b);
                    acc += integrate(|t| s.eval(t), x, next, opts).value;
                    x = next;
                }
                acc
            }
            NoiseKind::Sampled(tab) => tab.integral_of_square(a, b),
        }
    }
}
