//! Euler–Maruyama simulation of `dX = -f(X) dt + σ(t) dB` and ensemble
//! statistics.
//!
//! Gaussian increments come from a ChaCha8 stream keyed by the master seed
//! with the path index as stream id, so each step consumes one fixed word
//! position and a path does not depend on which worker runs it. Normals are
//! produced by inverting the normal CDF.
//!
//! When `Δ |f(X)/X|` exceeds the stability threshold the step is split into
//! substeps whose Brownian increments are a bridge refinement of the main
//! increment, drawn from a second stream. The main increments, and hence the
//! Brownian path on the `Δ` grid, are unaffected.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::decay_scale::DecayScale;
use crate::diagnostics::{classify, final_decade, Limit, Tolerances, WindowStats};
use crate::error::{domain, Error, Result};
use crate::nonlinearity::NonlinearityModel;
use crate::perturbations::NoiseIntensity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeParams {
    pub dt: f64,
    /// split a step when `dt |f(X)/X|` exceeds this
    pub stability: f64,
    pub blow_up: f64,
    pub per_decade: usize,
    /// increment widths `h` at which `X(t+h)` is recorded
    pub increments: Vec<f64>,
    /// normals per step; the increment is their scaled sum, so a run with
    /// `dt` and `aggregate = 2` sees the same Brownian path as a run with
    /// `dt/2` and `aggregate = 1`
    pub aggregate: u32,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            stability: 0.5,
            blow_up: 1e6,
            per_decade: 64,
            increments: vec![1.0],
            aggregate: 1,
        }
    }
}

impl SdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(domain(format!("step must be positive, got {}", self.dt)));
        }
        if !(self.stability > 0.0 && self.blow_up > 0.0) || self.per_decade == 0 {
            return Err(domain("stability, blow-up guard and checkpoint density must be positive"));
        }
        if self.aggregate == 0 {
            return Err(domain("aggregate must be at least 1"));
        }
        for &h in &self.increments {
            self.steps_for(h)?;
        }
        Ok(())
    }

    /// `h / dt` as an integer, or an error when `h` is not a multiple.
    pub fn steps_for(&self, h: f64) -> Result<u64> {
        let m = (h / self.dt).round();
        if !(h > 0.0) || m < 1.0 || (m * self.dt - h).abs() > 1e-9 * h {
            return Err(Error::IncrementNotMultiple { h, dt: self.dt });
        }
        Ok(m as u64)
    }
}

/// One Euler–Maruyama path, thinned to checkpoints.
#[derive(Debug, Clone)]
pub struct SdePath {
    pub dt: f64,
    pub t_end: f64,
    pub xi: f64,
    pub seed: u64,
    pub path_index: u64,
    /// checkpoint times (multiples of `dt`)
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// `M(t) = Σ σ(t_k) ΔB_k` at the checkpoints
    pub noise: Vec<f64>,
    /// for each recorded `h`: `X(t+h)` at every checkpoint, NaN past `T`
    pub partners: Vec<(f64, Vec<f64>)>,
    pub split_steps: u64,
}

/// Normal draw from one 64-bit word: 53-bit uniform on the open interval,
/// then the inverse CDF.
#[inline]
fn normal_from(word: u64) -> f64 {
    let u = ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

fn main_stream(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path);
    rng
}

fn bridge_stream(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path + 1);
    rng
}

/// Step indices of the log-spaced checkpoints, `0` and the final step.
fn checkpoint_steps(n_steps: u64, dt: f64, per_decade: usize) -> Vec<u64> {
    let t_end = n_steps as f64 * dt;
    let mut out: Vec<u64> = crate::ode::checkpoints(t_end, per_decade)
        .into_iter()
        .map(|t| ((t / dt).round() as u64).min(n_steps))
        .collect();
    out.push(n_steps);
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy)]
pub struct PathOptions {
    pub seed: u64,
    pub path_index: u64,
    /// use `-ξ_k` in place of every normal draw
    pub negate_noise: bool,
}

pub fn simulate_path(
    model: &NonlinearityModel,
    sigma: &NoiseIntensity,
    xi: f64,
    t_end: f64,
    params: &SdeParams,
    opts: PathOptions,
) -> Result<SdePath> {
    params.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) || !xi.is_finite() {
        return Err(domain("simulation needs a positive horizon and finite start"));
    }
    let dt = params.dt;
    let n_steps = (t_end / dt).round() as u64;
    if n_steps == 0 {
        return Err(domain(format!("horizon {t_end} shorter than one step {dt}")));
    }
    let cps = checkpoint_steps(n_steps, dt, params.per_decade);
    let offsets: Vec<u64> = params
        .increments
        .iter()
        .map(|&h| params.steps_for(h))
        .collect::<Result<_>>()?;
    let mut wanted: Vec<u64> = cps.clone();
    for &m in &offsets {
        wanted.extend(cps.iter().map(|&k| k + m).filter(|&k| k <= n_steps));
    }
    wanted.sort_unstable();
    wanted.dedup();

    let mut rec_x = Vec::with_capacity(wanted.len());
    let mut rec_m = Vec::with_capacity(wanted.len());
    let mut rng = main_stream(opts.seed, opts.path_index);
    let mut bridge = bridge_stream(opts.seed, opts.path_index);
    let sign = if opts.negate_noise { -1.0 } else { 1.0 };
    let agg = params.aggregate;
    let sub_sd = (dt / agg as f64).sqrt();
    let zero_noise = matches!(sigma.kind(), crate::perturbations::NoiseKind::Zero);

    let mut x = xi;
    let mut m_acc = 0.0;
    let mut split_steps = 0;
    let mut next = 0;
    for k in 0..=n_steps {
        if next < wanted.len() && wanted[next] == k {
            rec_x.push(x);
            rec_m.push(m_acc);
            next += 1;
        }
        if k == n_steps {
            break;
        }
        let t = k as f64 * dt;
        let mut db = 0.0;
        for _ in 0..agg {
            db += normal_from(rng.next_u64());
        }
        db *= sign * sub_sd;
        let rate = model.rate(x);
        if dt * rate <= params.stability {
            let s = if zero_noise { 0.0 } else { sigma.sigma(t) };
            x = x - model.f(x) * dt + s * db;
            m_acc += s * db;
        } else {
            split_steps += 1;
            let parts = (dt * rate / params.stability).ceil().min(1e6) as u64;
            let h = dt / parts as f64;
            let sd = h.sqrt();
            let mut e: Vec<f64> = (0..parts)
                .map(|_| sign * sd * normal_from(bridge.next_u64()))
                .collect();
            let adjust = (db - e.iter().sum::<f64>()) / parts as f64;
            for (j, ej) in e.iter_mut().enumerate() {
                *ej += adjust;
                let tj = t + j as f64 * h;
                let s = if zero_noise { 0.0 } else { sigma.sigma(tj) };
                x = x - model.f(x) * h + s * *ej;
                m_acc += s * *ej;
            }
        }
        if !(x.abs() <= params.blow_up) {
            return Err(Error::BlowUp {
                t: (k + 1) as f64 * dt,
                value: x.abs(),
            });
        }
    }

    let lookup = |k: u64| -> usize { wanted.binary_search(&k).expect("recorded step") };
    let times: Vec<f64> = cps.iter().map(|&k| k as f64 * dt).collect();
    let states: Vec<f64> = cps.iter().map(|&k| rec_x[lookup(k)]).collect();
    let noise: Vec<f64> = cps.iter().map(|&k| rec_m[lookup(k)]).collect();
    let partners = params
        .increments
        .iter()
        .zip(&offsets)
        .map(|(&h, &m)| {
            let v = cps
                .iter()
                .map(|&k| {
                    if k + m <= n_steps {
                        rec_x[lookup(k + m)]
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            (h, v)
        })
        .collect();
    Ok(SdePath {
        dt,
        t_end: n_steps as f64 * dt,
        xi,
        seed: opts.seed,
        path_index: opts.path_index,
        times,
        states,
        noise,
        partners,
        split_steps,
    })
}

/// `x(t)/F⁻¹(t)` on checkpoints with `t >= 1`.
pub fn ratio_series(path: &SdePath, scale: &DecayScale) -> Vec<(f64, f64)> {
    path.times
        .iter()
        .zip(&path.states)
        .filter(|(t, _)| **t >= 1.0)
        .map(|(&t, &x)| (t, x / scale.f_inv(t)))
        .collect()
}

/// `q(t) = ((X(t+h) - X(t))/h) / f(F⁻¹(t))` on checkpoints with `t >= 1`
/// and `t + h <= T`.
pub fn scaled_increment(path: &SdePath, h: f64, scale: &DecayScale) -> Result<Vec<(f64, f64)>> {
    let m = (h / path.dt).round();
    if !(h > 0.0) || m < 1.0 || (m * path.dt - h).abs() > 1e-9 * h {
        return Err(Error::IncrementNotMultiple { h, dt: path.dt });
    }
    let (_, ahead) = path
        .partners
        .iter()
        .find(|(hh, _)| (hh - h).abs() <= 1e-12 * h)
        .ok_or_else(|| domain(format!("increment h = {h} was not recorded for this path")))?;
    Ok(path
        .times
        .iter()
        .zip(&path.states)
        .zip(ahead)
        .filter(|((t, _), xa)| **t >= 1.0 && xa.is_finite())
        .map(|((&t, &x), &xa)| (t, (xa - x) / h / scale.ff_inv(t)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub t: f64,
    /// `M(T) - M(t)`
    pub m_tail: f64,
    pub varsigma: f64,
    /// `√(2ς log log(1/ς))`, defined where `ς < e^{-1}`
    pub sigma_lil: Option<f64>,
}

/// LIL normaliser `√(2ς log log(1/ς))`, or `None` when `ς >= e^{-1}`.
pub fn lil_normaliser(varsigma: f64) -> Option<f64> {
    if varsigma > 0.0 && varsigma < (-1.0f64).exp() {
        Some((2.0 * varsigma * (1.0 / varsigma).ln().ln()).sqrt())
    } else {
        None
    }
}

/// Truncated tail martingale on the checkpoints. The neglected part beyond
/// `T` has variance `ς(T)`, returned alongside.
pub fn tail_martingale(path: &SdePath, sigma: &NoiseIntensity) -> Result<(Vec<TailPoint>, f64)> {
    let m_end = *path.noise.last().unwrap();
    let truncation = sigma.varsigma(path.t_end)?;
    let pts = path
        .times
        .iter()
        .zip(&path.noise)
        .map(|(&t, &m)| {
            let vs = sigma.varsigma_unchecked(t);
            TailPoint {
                t,
                m_tail: m_end - m,
                varsigma: vs,
                sigma_lil: lil_normaliser(vs),
            }
        })
        .collect();
    Ok((pts, truncation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub xi: f64,
    pub t_end: f64,
    pub paths: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub params: SdeParams,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// fractions of `T` bounding the window for the LIL statistic
    #[serde(default = "default_lil_window")]
    pub lil_window: [f64; 2],
}

fn default_lil_window() -> [f64; 2] {
    [0.1, 0.5]
}

#[derive(Debug, Clone)]
pub struct IncrementStats {
    pub h: f64,
    pub limit: Limit,
    pub window: Option<WindowStats>,
}

#[derive(Debug, Clone)]
pub struct PathStats {
    pub limit: Limit,
    pub ratio_window: Option<WindowStats>,
    pub increments: Vec<IncrementStats>,
    pub x_end: f64,
    /// `F(|X(T)|)/T`
    pub decay_time_ratio: f64,
    /// max of `M_tail/Σ` over the LIL window, when Σ is defined there
    pub lil_max: Option<f64>,
    pub split_steps: u64,
}

#[derive(Debug, Clone)]
pub struct PathSummary {
    pub index: u64,
    pub outcome: std::result::Result<PathStats, String>,
}

#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub master_seed: u64,
    pub paths: Vec<PathSummary>,
    /// fractions classified -1, 0, +1 and unclassified (incl. failures)
    pub fractions: [f64; 4],
}

impl EnsembleSummary {
    pub fn classified(&self) -> impl Iterator<Item = (i8, &PathStats)> {
        self.paths.iter().filter_map(|p| match &p.outcome {
            Ok(s) => s.limit.class().map(|c| (c, s)),
            Err(_) => None,
        })
    }
}

pub fn path_stats(
    path: &SdePath,
    scale: &DecayScale,
    sigma: &NoiseIntensity,
    spec: &EnsembleSpec,
) -> Result<PathStats> {
    let ratios = ratio_series(path, scale);
    let cls = classify(&ratios, &spec.tolerances);
    let increments = path
        .partners
        .iter()
        .map(|(h, _)| {
            let q = scaled_increment(path, *h, scale)?;
            let c = classify(&q, &spec.tolerances);
            Ok(IncrementStats {
                h: *h,
                limit: c.limit,
                window: final_decade(&q),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x_end = *path.states.last().unwrap();
    let decay_time_ratio = if x_end == 0.0 {
        f64::INFINITY
    } else {
        scale.f_big(x_end.abs()) / path.t_end
    };
    let lil_max = if sigma.is_square_integrable() {
        let (pts, _) = tail_martingale(path, sigma)?;
        let [a, b] = spec.lil_window;
        pts.iter()
            .filter(|p| p.t >= a * path.t_end && p.t <= b * path.t_end)
            .filter_map(|p| p.sigma_lil.map(|s| p.m_tail / s))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    } else {
        None
    };
    Ok(PathStats {
        limit: cls.limit,
        ratio_window: cls.evidence,
        increments,
        x_end,
        decay_time_ratio,
        lil_max,
        split_steps: path.split_steps,
    })
}

/// Runs all paths (in parallel on the current rayon pool); results are in
/// path order. With `keep > 0` the first `keep` paths are returned as well.
pub fn run_ensemble(
    model: &NonlinearityModel,
    sigma: &NoiseIntensity,
    spec: &EnsembleSpec,
    keep: usize,
) -> Result<(EnsembleSummary, Vec<SdePath>)> {
    if spec.paths == 0 {
        return Err(domain("ensemble needs at least one path"));
    }
    spec.params.validate()?;
    let scale = DecayScale::new(model.clone())?;
    let results: Vec<(PathSummary, Option<SdePath>)> = (0..spec.paths)
        .into_par_iter()
        .map(|i| {
            let opts = PathOptions {
                seed: spec.master_seed,
                path_index: i,
                negate_noise: false,
            };
            let outcome = simulate_path(model, sigma, spec.xi, spec.t_end, &spec.params, opts)
                .and_then(|p| path_stats(&p, &scale, sigma, spec).map(|s| (s, p)));
            match outcome {
                Ok((s, p)) => (
                    PathSummary {
                        index: i,
                        outcome: Ok(s),
                    },
                    ((i as usize) < keep).then_some(p),
                ),
                Err(e) => (
                    PathSummary {
                        index: i,
                        outcome: Err(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();
    let mut counts = [0usize; 4];
    let mut summaries = Vec::with_capacity(results.len());
    let mut kept = Vec::new();
    for (s, p) in results {
        let slot = match &s.outcome {
            Ok(st) => match st.limit.class() {
                Some(c) => (c + 1) as usize,
                None => 3,
            },
            Err(_) => 3,
        };
        counts[slot] += 1;
        summaries.push(s);
        kept.extend(p);
    }
    let n = spec.paths as f64;
    Ok((
        EnsembleSummary {
            master_seed: spec.master_seed,
            paths: summaries,
            fractions: counts.map(|c| c as f64 / n),
        },
        kept,
    ))
}
