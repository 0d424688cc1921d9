//! Adaptive integration of `x' = -f(x) + g(t)` and of the internal form
//! `z' = -f(z + s(t))`.
//!
//! The integrator is the Dormand–Prince 5(4) pair with a step cap. Steps
//! land exactly on output checkpoints and on forcing breakpoints (spike
//! seams). Output is thinned to checkpoints: sixteen on `[0, 1]`, then
//! log-spaced to the horizon.

use serde::{Deserialize, Serialize};

use crate::decay_scale::DecayScale;
use crate::diagnostics::window_stats;
use crate::error::{domain, Error, Result};
use crate::nonlinearity::NonlinearityModel;
use crate::perturbations::{Perturbation, PerturbationKind};
use crate::quad::{integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepPolicy {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_init: f64,
    pub per_decade: usize,
    /// Oscillating forcing is integrated directly only while its phase
    /// advances slower than this; afterwards the internal form is used.
    pub max_phase_rate: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
            h_max: 0.1,
            h_init: 1e-3,
            per_decade: 64,
            max_phase_rate: 1e5,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol >= 0.0
            && self.h_max > 0.0
            && self.h_init > 0.0
            && self.per_decade >= 1
            && self.max_phase_rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid step policy {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    External,
    Internal,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// right-hand side evaluated at the checkpoint
    pub derivatives: Vec<f64>,
    pub xi: f64,
    pub policy: StepPolicy,
    pub form: Form,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    /// time from which an oscillating forcing was averaged out
    pub averaged_from: Option<f64>,
    /// bound on the state error introduced by that averaging
    pub averaging_bound: f64,
}

impl Trajectory {
    pub fn last(&self) -> (f64, f64) {
        (*self.times.last().unwrap(), *self.values.last().unwrap())
    }
}

/// Output grid: 0, j/16 on (0, 1], `per_decade` points per decade to `t_end`.
pub fn checkpoints(t_end: f64, per_decade: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    let first = t_end.min(1.0);
    for j in 1..=16 {
        out.push(first * j as f64 / 16.0);
    }
    if t_end > 1.0 {
        let decades = t_end.log10();
        let n = (decades * per_decade as f64).ceil() as usize;
        for k in 1..=n {
            out.push(10f64.powf(decades * k as f64 / n as f64));
        }
        *out.last_mut().unwrap() = t_end;
    }
    out.dedup();
    out
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const BLOW_UP: f64 = 1e12;

struct Run {
    times: Vec<f64>,
    values: Vec<f64>,
    derivatives: Vec<f64>,
    accepted: u64,
    rejected: u64,
}

/// Integrates `y' = rhs(t, y)` from `(t0, y0)` through the given ascending
/// checkpoints (all `>= t0`). `limit(t)` returns the largest admissible step
/// at `t` and the next breakpoint, if any.
fn dopri<R, L>(rhs: R, limit: L, t0: f64, y0: f64, outputs: &[f64], policy: &StepPolicy) -> Result<Run>
where
    R: Fn(f64, f64) -> f64,
    L: Fn(f64) -> (f64, Option<f64>),
{
    let mut run = Run {
        times: Vec::with_capacity(outputs.len()),
        values: Vec::with_capacity(outputs.len()),
        derivatives: Vec::with_capacity(outputs.len()),
        accepted: 0,
        rejected: 0,
    };
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, y);
    let mut h_prop = policy.h_init.min(policy.h_max);
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t {
        run.times.push(outputs[next_out]);
        run.values.push(y);
        run.derivatives.push(k1);
        next_out += 1;
    }
    while next_out < outputs.len() {
        let target = outputs[next_out];
        let (cap, brk) = limit(t);
        let mut stop = target;
        if let Some(b) = brk {
            if b > t && b < stop {
                stop = b;
            }
        }
        let mut h = h_prop.min(policy.h_max).min(cap);
        let clamped = t + h >= stop;
        if clamped {
            h = stop - t;
        }
        if !(h > 1e-15 * t.abs().max(1.0)) && !clamped {
            return Err(Error::StepUnderflow { t });
        }
        let k2 = rhs(t + h / 5.0, y + h * A21 * k1);
        let k3 = rhs(t + 0.3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = rhs(t + 0.8 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = rhs(
            t + 8.0 / 9.0 * h,
            y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4),
        );
        let k6 = rhs(
            t + h,
            y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
        );
        let y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        let t_new = if clamped { stop } else { t + h };
        let k7 = rhs(t_new, y_new);
        let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let scale = policy.atol + policy.rtol * y.abs().max(y_new.abs());
        let ratio = if scale > 0.0 {
            err.abs() / scale
        } else if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if !y_new.is_finite() {
            return Err(Error::BlowUp { t, value: y_new });
        }
        let factor = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        if ratio <= 1.0 {
            t = t_new;
            y = y_new;
            k1 = k7;
            run.accepted += 1;
            let grown = h * factor;
            h_prop = if clamped { h_prop.max(grown) } else { grown };
            if y.abs() > BLOW_UP {
                return Err(Error::BlowUp { t, value: y });
            }
            while next_out < outputs.len() && outputs[next_out] <= t {
                run.times.push(outputs[next_out]);
                run.values.push(y);
                run.derivatives.push(k1);
                next_out += 1;
            }
        } else {
            run.rejected += 1;
            h_prop = h * factor;
            if h_prop <= 1e-15 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t });
            }
        }
    }
    Ok(run)
}

fn check_horizon(g: &Perturbation, t_end: f64) -> Result<()> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(domain(format!("horizon must be positive, got {t_end}")));
    }
    if t_end > g.horizon() {
        return Err(domain(format!(
            "horizon {t_end} exceeds the forcing horizon {}",
            g.horizon()
        )));
    }
    Ok(())
}

/// First time the oscillator phase rate exceeds `rate`, if before `t_end`.
fn phase_switch(g: &Perturbation, rate: f64, t_end: f64) -> Option<f64> {
    let PerturbationKind::Oscillating(o) = g.kind() else {
        return None;
    };
    if o.phase_rate(t_end) <= rate {
        return None;
    }
    let (mut lo, mut hi) = (0.0, t_end);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if o.phase_rate(mid) > rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(lo)
}

/// Solves `x' = -f(x) + g(t)`, `x(0) = ξ` on `[0, t_end]`.
///
/// An oscillating forcing is followed directly until its phase rate exceeds
/// `policy.max_phase_rate`. From then on `z = x + ∫ₜ^∞ g` is integrated with
/// the fast tail dropped from `z' = -f(z - ∫ₜ^∞ g)`, and `x` is recovered
/// from `z` and the accurately evaluated tail. The state error this causes
/// is at most `L ∫ envelope` with `L` the Lipschitz constant of `f` on the
/// visited range; it is reported in `averaging_bound`.
pub fn integrate_ode(
    model: &NonlinearityModel,
    g: &Perturbation,
    xi: f64,
    t_end: f64,
    policy: &StepPolicy,
) -> Result<Trajectory> {
    policy.validate()?;
    check_horizon(g, t_end)?;
    if !xi.is_finite() {
        return Err(domain("initial condition must be finite"));
    }
    let outputs = checkpoints(t_end, policy.per_decade);
    let switch = phase_switch(g, policy.max_phase_rate, t_end);
    let t_direct = switch.unwrap_or(t_end);
    let head: Vec<f64> = outputs.iter().copied().filter(|&t| t <= t_direct).collect();
    let mut head_out = head.clone();
    if *head_out.last().unwrap() < t_direct {
        head_out.push(t_direct);
    }
    let limit = |t: f64| (g.resolution_step(t), g.next_breakpoint(t));
    let run = dopri(
        |t, x| -model.f(x) + g.g(t),
        limit,
        0.0,
        xi,
        &head_out,
        policy,
    )?;
    let mut traj = Trajectory {
        times: run.times[..head.len()].to_vec(),
        values: run.values[..head.len()].to_vec(),
        derivatives: run.derivatives[..head.len()].to_vec(),
        xi,
        policy: *policy,
        form: Form::External,
        accepted_steps: run.accepted,
        rejected_steps: run.rejected,
        averaged_from: None,
        averaging_bound: 0.0,
    };
    let Some(t_sw) = switch else {
        return Ok(traj);
    };
    let PerturbationKind::Oscillating(osc) = g.kind() else {
        unreachable!("phase switch only for oscillating forcing");
    };
    let x_sw = *run.values.last().unwrap();
    let tail = |t: f64| g.tail_estimate(t).map(|e| e.value).unwrap_or(0.0);
    let z_sw = x_sw + tail(t_sw);
    let rest: Vec<f64> = outputs.iter().copied().filter(|&t| t > t_sw).collect();
    let cruise = StepPolicy {
        h_max: policy.h_max.max(1.0),
        ..*policy
    };
    let run2 = dopri(|_, z| -model.f(z), |_| (f64::INFINITY, None), t_sw, z_sw, &rest, &cruise)?;
    let mut z_max = z_sw.abs();
    for (t, z) in run2.times.iter().zip(&run2.values) {
        let x = z - tail(*t);
        traj.times.push(*t);
        traj.values.push(x);
        traj.derivatives.push(-model.f(x) + g.g(*t));
        z_max = z_max.max(z.abs());
    }
    let env = integrate(
        |t| osc.envelope(t),
        t_sw,
        t_end,
        QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 1e-6,
            max_intervals: 500,
        },
    )
    .value;
    let r = z_max + osc.envelope(t_sw);
    let lip = (0..=64)
        .map(|k| model.derivative(r * k as f64 / 64.0))
        .fold(0.0, f64::max);
    traj.accepted_steps += run2.accepted;
    traj.rejected_steps += run2.rejected;
    traj.averaged_from = Some(t_sw);
    traj.averaging_bound = lip * env;
    Ok(traj)
}

/// Solves `z' = -f(z + s(t))`, `z(0) = ξ` on `[0, t_end]`.
pub fn integrate_internal<S>(
    model: &NonlinearityModel,
    shift: S,
    xi: f64,
    t_end: f64,
    policy: &StepPolicy,
) -> Result<Trajectory>
where
    S: Fn(f64) -> f64,
{
    policy.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) || !xi.is_finite() {
        return Err(domain("internal form needs a positive horizon and finite start"));
    }
    let outputs = checkpoints(t_end, policy.per_decade);
    let run = dopri(
        |t, z| -model.f(z + shift(t)),
        |_| (f64::INFINITY, None),
        0.0,
        xi,
        &outputs,
        policy,
    )?;
    Ok(Trajectory {
        times: run.times,
        values: run.values,
        derivatives: run.derivatives,
        xi,
        policy: *policy,
        form: Form::Internal,
        accepted_steps: run.accepted,
        rejected_steps: run.rejected,
        averaged_from: None,
        averaging_bound: 0.0,
    })
}

/// The shift `s(t) = -∫ₜ^∞ g` for which `z = x - s` turns the external
/// equation into the internal one, with `z(0) = ξ + ∫₀^∞ g`.
pub fn internal_shift(g: &Perturbation) -> Result<impl Fn(f64) -> f64 + '_> {
    g.tail_estimate(0.0)?;
    Ok(move |t: f64| -g.tail_estimate(t).map(|e| e.value).unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecadeSummary {
    pub lo: f64,
    pub hi: f64,
    pub ratio_mean: f64,
    pub ratio_std: f64,
    pub derivative_mean: f64,
    pub derivative_std: f64,
}

#[derive(Debug, Clone)]
pub struct RateDiagnostics {
    pub t: Vec<f64>,
    /// `x(t) / F⁻¹(t)`
    pub ratio: Vec<f64>,
    /// `x'(t) / f(F⁻¹(t))`
    pub derivative_ratio: Vec<f64>,
    pub decades: Vec<DecadeSummary>,
}

impl RateDiagnostics {
    pub fn ratio_series(&self) -> Vec<(f64, f64)> {
        self.t.iter().copied().zip(self.ratio.iter().copied()).collect()
    }
    pub fn derivative_series(&self) -> Vec<(f64, f64)> {
        self.t
            .iter()
            .copied()
            .zip(self.derivative_ratio.iter().copied())
            .collect()
    }
}

/// Ratio series on the checkpoints with `t >= 1`.
pub fn diagnostics(traj: &Trajectory, scale: &DecayScale) -> RateDiagnostics {
    let mut out = RateDiagnostics {
        t: Vec::new(),
        ratio: Vec::new(),
        derivative_ratio: Vec::new(),
        decades: Vec::new(),
    };
    for ((&t, &x), &dx) in traj.times.iter().zip(&traj.values).zip(&traj.derivatives) {
        if t < 1.0 {
            continue;
        }
        let fi = scale.f_inv(t);
        out.t.push(t);
        out.ratio.push(x / fi);
        out.derivative_ratio.push(dx / scale.model().f(fi));
    }
    let rs = out.ratio_series();
    let ds = out.derivative_series();
    if let Some(&t_end) = out.t.last() {
        let mut lo = 1.0;
        while lo < t_end * (1.0 - 1e-12) {
            let hi = (lo * 10.0).min(t_end);
            if let (Some(r), Some(d)) = (window_stats(&rs, lo, hi), window_stats(&ds, lo, hi)) {
                out.decades.push(DecadeSummary {
                    lo,
                    hi,
                    ratio_mean: r.mean,
                    ratio_std: r.std,
                    derivative_mean: d.mean,
                    derivative_std: d.std,
                });
            }
            lo *= 10.0;
        }
    }
    out
}
