//! Finite-horizon classification of `lim r(t)` for a ratio series.
//!
//! The final decade of the series is summarised by its log-time weighted
//! mean and standard deviation and by the drift, the least-squares slope of
//! the values against `log10 t` over that decade. A limit in `{-1, 0, 1}` is
//! reported only when all three are small; any such rule is a heuristic for
//! a `t → ∞` statement, so the tolerances are exposed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol_mean: f64,
    pub tol_std: f64,
    /// per decade
    pub tol_drift: f64,
    /// decades past `t = 1` the series must cover
    pub min_decades: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_mean: 0.1,
            tol_std: 0.05,
            tol_drift: 0.05,
            min_decades: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    /// one of -1, 0, 1
    Class(i8),
    OtherFinite(f64),
    NoLimit,
    Inconclusive,
}

impl Limit {
    pub fn class(&self) -> Option<i8> {
        match self {
            Limit::Class(c) => Some(*c),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Limit::Class(c) => format!("{c}"),
            Limit::OtherFinite(v) => format!("other({v:.6})"),
            Limit::NoLimit => "none".into(),
            Limit::Inconclusive => "inconclusive".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    pub std: f64,
    pub drift: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitClassification {
    pub limit: Limit,
    pub evidence: Option<WindowStats>,
}

const MIN_WINDOW_POINTS: usize = 8;

/// Points with `t >= 1` and finite values.
fn usable(series: &[(f64, f64)]) -> Vec<(f64, f64)> {
    series
        .iter()
        .copied()
        .filter(|&(t, v)| t >= 1.0 && t.is_finite() && v.is_finite())
        .collect()
}

fn covers(pts: &[(f64, f64)], decades: f64) -> bool {
    match (pts.first(), pts.last()) {
        (Some(&(a, _)), Some(&(b, _))) => (b / a).log10() >= decades * (1.0 - 1e-9),
        _ => false,
    }
}

/// Log-time weighted statistics over `lo <= t <= hi`.
pub fn window_stats(series: &[(f64, f64)], lo: f64, hi: f64) -> Option<WindowStats> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, v)| t >= lo && t <= hi && t > 0.0 && v.is_finite())
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
    let n = pts.len();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i == 0 { x[0] } else { x[i - 1] };
            let right = if i + 1 == n { x[n - 1] } else { x[i + 1] };
            0.5 * (right - left)
        })
        .collect();
    let wsum: f64 = w.iter().sum();
    if !(wsum > 0.0) {
        return None;
    }
    let mean = pts.iter().zip(&w).map(|(p, wi)| wi * p.1).sum::<f64>() / wsum;
    let var = pts
        .iter()
        .zip(&w)
        .map(|(p, wi)| wi * (p.1 - mean).powi(2))
        .sum::<f64>()
        / wsum;
    let xm = x.iter().zip(&w).map(|(xi, wi)| wi * xi).sum::<f64>() / wsum;
    let sxx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * (xi - xm).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(&w)
        .zip(&pts)
        .map(|((xi, wi), p)| wi * (xi - xm) * (p.1 - mean))
        .sum();
    Some(WindowStats {
        mean,
        std: var.max(0.0).sqrt(),
        drift: if sxx > 0.0 { (sxy / sxx).abs() } else { 0.0 },
        points: n,
    })
}

/// Statistics of the final decade `[t_end/10, t_end]`.
pub fn final_decade(series: &[(f64, f64)]) -> Option<WindowStats> {
    let t_end = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    window_stats(series, t_end / 10.0, t_end)
}

pub fn classify(series: &[(f64, f64)], tol: &Tolerances) -> LimitClassification {
    let pts = usable(series);
    if !covers(&pts, tol.min_decades) {
        return LimitClassification {
            limit: Limit::Inconclusive,
            evidence: None,
        };
    }
    let stats = match final_decade(&pts) {
        Some(s) if s.points >= MIN_WINDOW_POINTS => s,
        other => {
            return LimitClassification {
                limit: Limit::Inconclusive,
                evidence: other,
            }
        }
    };
    let limit = if stats.std >= tol.tol_std || stats.drift >= tol.tol_drift {
        Limit::NoLimit
    } else {
        let nearest = stats.mean.round().clamp(-1.0, 1.0);
        if (stats.mean - nearest).abs() <= tol.tol_mean {
            Limit::Class(nearest as i8)
        } else {
            Limit::OtherFinite(stats.mean)
        }
    };
    LimitClassification {
        limit,
        evidence: Some(stats),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Shrinking-envelope test for `r(t) → 0`: over the last three decades the
/// per-decade sup of `|r|` must not increase, and the last one must be below
/// `threshold`.
pub fn tends_to_zero(series: &[(f64, f64)], threshold: f64) -> (Verdict, Vec<f64>) {
    let pts = usable(series);
    if !covers(&pts, 3.0) {
        return (Verdict::Inconclusive, Vec::new());
    }
    let t_end = pts.last().unwrap().0;
    let sups: Vec<f64> = (0..3)
        .rev()
        .map(|k| {
            let hi = t_end / 10f64.powi(k);
            let lo = hi / 10.0;
            pts.iter()
                .filter(|p| p.0 >= lo && p.0 <= hi)
                .map(|p| p.1.abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let shrinking = sups.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-300);
    let v = if shrinking && sups[2] < threshold {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    (v, sups)
}
