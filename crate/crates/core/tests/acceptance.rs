//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rvdecay::criteria::CriteriaOptions;
use rvdecay::diagnostics::{classify, Limit, Tolerances};
use rvdecay::ode::{diagnostics, integrate_ode, StepPolicy};
use rvdecay::perturbations::{
    GammaSpec, NoiseIntensity, Oscillator, Perturbation, PerturbationKind, SpikedFunction,
};
use rvdecay::runner::sweep_row;
use rvdecay::sde::{run_ensemble, EnsembleSpec, EnsembleSummary, SdeParams};
use rvdecay::{DecayScale, NonlinearityModel, ScaleMode};

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cube() -> NonlinearityModel {
    NonlinearityModel::pure_power(1.0, 3.0).unwrap()
}

fn closed_f_inv(t: f64) -> f64 {
    (1.0 + 2.0 * t).powf(-0.5)
}

fn c1_decay_scale() -> Outcome {
    let start = Instant::now();
    let scale = DecayScale::with_mode(cube(), ScaleMode::Numeric).unwrap();
    let mut ts = vec![0.0];
    ts.extend((0..999).map(|k| 10f64.powf(-3.0 + 9.0 * k as f64 / 998.0)));
    let worst = ts
        .iter()
        .map(|&t| {
            let want = closed_f_inv(t);
            (scale.eval_f_inv(t).unwrap() - want).abs() / want
        })
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 1.0,
        format!("numeric F^-1 max rel error {worst:.2e} over {} points, {secs:.3} s", ts.len()),
    )
}

fn c2_unperturbed() -> Outcome {
    let traj = integrate_ode(&cube(), &Perturbation::zero(f64::INFINITY), 1.0, 1e4, &StepPolicy::default()).unwrap();
    let worst = traj
        .times
        .iter()
        .zip(&traj.values)
        .map(|(&t, &x)| (x / closed_f_inv(t) - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        worst < 1e-3,
        format!("max |x/F^-1 - 1| = {worst:.2e} over {} checkpoints", traj.times.len()),
    )
}

fn ode_limit(g: &Perturbation, xi: f64, t_end: f64) -> Limit {
    let scale = DecayScale::new(cube()).unwrap();
    let traj = integrate_ode(&cube(), g, xi, t_end, &StepPolicy::default()).unwrap();
    classify(&diagnostics(&traj, &scale).ratio_series(), &Tolerances::default()).limit
}

fn c3_theorem_instances() -> Outcome {
    let start = Instant::now();
    let scale = std::sync::Arc::new(DecayScale::new(cube()).unwrap());
    let opts = CriteriaOptions {
        t_end: 1e4,
        ..Default::default()
    };

    let power = Perturbation::power_decay(2.0, 3.0, f64::INFINITY).unwrap();
    let l_power = ode_limit(&power, 1.0, 1e4);
    let (tail, _) = rvdecay::criteria::check_det_conditions(&scale, &power, &opts).unwrap();

    let rate = Perturbation::new(
        PerturbationKind::ScaledDerivativeRate {
            c: 1.0,
            scale: scale.clone(),
        },
        f64::INFINITY,
    )
    .unwrap();
    let l_rate = ode_limit(&rate, 1.0, 1e4);

    let zero = Perturbation::new(
        PerturbationKind::ZeroLimitSynthetic { xi: 1.0, model: cube() },
        f64::INFINITY,
    )
    .unwrap();
    let l_zero = ode_limit(&zero, 1.0, 1e4);
    let secs = start.elapsed().as_secs_f64();

    let pass = l_power == Limit::Class(1)
        && tail.verdict == rvdecay::diagnostics::Verdict::Holds
        && l_rate.class().is_none()
        && matches!(l_rate, Limit::OtherFinite(_) | Limit::NoLimit)
        && l_zero == Limit::Class(0)
        && secs < 10.0;
    outcome(
        pass,
        format!(
            "power decay {} (tail condition {}), scaled rate {}, zero-limit {}, {secs:.2} s",
            l_power.label(),
            tail.verdict.label(),
            l_rate.label(),
            l_zero.label()
        ),
    )
}

fn c4_oscillating() -> Outcome {
    let osc = Oscillator::new(GammaSpec::OnePlusT, 3).unwrap();
    let a2 = osc.abs_integral(1e2).value;
    let a3 = osc.abs_integral(1e3).value;
    let t_end = 1e4;
    let scale = DecayScale::new(cube()).unwrap();
    let worst_tail = (0..=64)
        .map(|k| t_end / 10.0 * 10f64.powf(k as f64 / 64.0))
        .map(|t| {
            let e = osc.tail(t);
            (e.value.abs() + e.bound) / scale.eval_f_inv(t).unwrap()
        })
        .fold(0.0, f64::max);
    let g = Perturbation::new(PerturbationKind::Oscillating(osc), f64::INFINITY).unwrap();
    let l = ode_limit(&g, 1.0, t_end);
    outcome(
        a3 > 10.0 * a2 && worst_tail < 0.05 && l.class().is_some(),
        format!(
            "int|g| ratio T=1e3/T=1e2 = {:.2}, last-decade tail ratio <= {worst_tail:.2e}, limit {}",
            a3 / a2,
            l.label()
        ),
    )
}

fn c5_spikes() -> Outcome {
    let s = SpikedFunction::new(1.0, 2.0, GammaSpec::Linear).unwrap();
    let seam = (0..100u64).map(|n| s.seam_mismatch(n)).fold(0.0, f64::max);
    let ratios: Vec<f64> = (0..=180)
        .map(|k| 10.0 + 0.5 * k as f64)
        .map(|t| s.tail(t).value / s.base_tail(t))
        .collect();
    let (rmin, rmax) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    let peaks: Vec<f64> = (20..100u64)
        .map(|n| {
            let c = s.seams(n)[1];
            s.eval(c) / s.gamma_plus(c)
        })
        .collect();
    let (pmin, pmax) = peaks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    outcome(
        seam < 1e-6 && rmin >= 1.0 && rmax <= 1.05 && pmin >= 0.99 && pmax <= 1.0 + 1e-12,
        format!(
            "seam mismatch {seam:.2e}, tail ratio in [{rmin:.6}, {rmax:.6}], peak ratio in [{pmin:.9}, {pmax:.9}]"
        ),
    )
}

fn ensemble(gamma: f64, t_end: f64, paths: u64) -> EnsembleSummary {
    let sigma = NoiseIntensity::power_decay(1.0, gamma).unwrap();
    let spec = EnsembleSpec {
        xi: 1.0,
        t_end,
        paths,
        master_seed: SEED,
        params: SdeParams::default(),
        tolerances: Tolerances::default(),
        lil_window: [0.1, 0.5],
    };
    run_ensemble(&cube(), &sigma, &spec, 0).unwrap().0
}

/// Criterion 6 on the first 100 paths; path `i` does not depend on the
/// ensemble size, so these are the paths of a 100-path run.
fn c6_baseline(all: &EnsembleSummary) -> Outcome {
    let paths: Vec<_> = all.paths.iter().take(100).collect();
    let n = paths.len() as f64;
    let stats: Vec<_> = paths.iter().filter_map(|p| p.outcome.as_ref().ok()).collect();
    let pm = stats.iter().filter(|s| matches!(s.limit.class(), Some(1) | Some(-1))).count();
    let zero = stats.iter().filter(|s| s.limit.class() == Some(0)).count();
    let classified: Vec<_> = stats.iter().filter(|s| s.limit.class().is_some()).collect();
    let time_ok = classified
        .iter()
        .all(|s| (0.8..=1.2).contains(&s.decay_time_ratio));
    let near = classified
        .iter()
        .filter(|s| {
            let lam = s.limit.class().unwrap() as f64;
            s.increments[0].window.is_some_and(|w| (w.mean + lam).abs() <= 0.15)
        })
        .count();
    let share_near = near as f64 / classified.len().max(1) as f64;
    outcome(
        pm as f64 / n >= 0.95 && zero as f64 / n <= 0.02 && time_ok && share_near >= 0.9,
        format!(
            "{pm}/100 classified +-1, {zero} classified 0, F(X(T))/T in [0.8,1.2]: {time_ok}, increment mean near -limit for {near}/{}",
            classified.len()
        ),
    )
}

fn c7_degraded() -> Outcome {
    let s = ensemble(1.5, 1e5, 100);
    let n = s.paths.len() as f64;
    let stats: Vec<_> = s.paths.iter().filter_map(|p| p.outcome.as_ref().ok()).collect();
    let classified = stats.iter().filter(|s| s.limit.class().is_some()).count();
    let rough = stats
        .iter()
        .filter(|s| s.increments[0].window.is_some_and(|w| w.std > 0.2))
        .count();
    outcome(
        classified as f64 / n >= 0.8 && rough as f64 / n >= 0.8,
        format!("{classified}/100 paths classified, increment std > 0.2 for {rough}/100"),
    )
}

fn c8_coherence() -> Outcome {
    let opts = CriteriaOptions::default();
    let mut cells = 0;
    let mut bad = Vec::new();
    for beta in [1.5, 2.0, 3.0, 5.0] {
        for k in 0..13 {
            let gamma = (6.0 + 2.0 * k as f64) / 10.0;
            let row = sweep_row(beta, gamma, 1.0, 0.05, &opts).unwrap();
            if row.near_threshold {
                continue;
            }
            cells += 1;
            if !(row.agree && row.sigma_l2 == (gamma > 0.5)) {
                bad.push(format!("({beta},{gamma})"));
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{cells} grid cells, {} disagreements {}", bad.len(), bad.join(" ")),
    )
}

fn c9_lil(all: &EnsembleSummary) -> Outcome {
    let mut v: Vec<f64> = all
        .paths
        .iter()
        .filter_map(|p| p.outcome.as_ref().ok().and_then(|s| s.lil_max))
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let top = v.len().div_ceil(10);
    let mean = v[..top].iter().sum::<f64>() / top as f64;
    outcome(
        v.len() == 200 && (0.5..=1.5).contains(&mean),
        format!("top-decile mean of max M_tail/Sigma over [T/10, T/2] = {mean:.4} ({} paths)", v.len()),
    )
}

const REPRO_CONFIGS: &[(&str, &str)] = &[
    (
        "ode",
        r#"
kind = "ode"
t_end = 1e4
xi = [1.0, -0.5]
[model]
family = "pure_power"
beta = 3.0
[forcing]
type = "power_decay"
c = 2.0
p = 3.0
"#,
    ),
    (
        "ode",
        r#"
kind = "ode-internal"
t_end = 1e3
[model]
family = "power_log_loglog"
beta = 2.0
beta1 = 1.0
[forcing]
type = "oscillating"
growth = "one_plus_t"
"#,
    ),
    (
        "sde",
        r#"
kind = "sde"
t_end = 1e3
seed = 11
[model]
family = "pure_power"
beta = 3.0
[noise]
type = "power_decay"
c = 1.0
gamma = 2.5
[sde]
increments = [1.0, 10.0]
[ensemble]
paths = 12
keep = 2
"#,
    ),
    (
        "criteria",
        r#"
kind = "ode"
t_end = 1e4
[model]
family = "pure_power"
beta = 3.0
[noise]
type = "power_decay"
c = 1.0
gamma = 1.2
"#,
    ),
    (
        "construct",
        r#"
kind = "ode"
t_end = 100.0
[model]
family = "pure_power"
beta = 3.0
[forcing]
type = "spiked"
c = 1.0
p = 2.0
growth = "linear"
[noise]
type = "spiked_square"
c = 1.0
p = 3.0
growth = "square"
"#,
    ),
    ("sweep", "kind = \"ode\"\nt_end = 10.0\n[model]\nfamily = \"pure_power\"\nbeta = 3.0\n"),
];

fn run_cli(sub: &str, config: &Path, out: &Path, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_rvdecay"))
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", threads])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn c10_reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = 0;
    let mut bad = Vec::new();
    for (i, (sub, text)) in REPRO_CONFIGS.iter().enumerate() {
        let cfg = tmp.path().join(format!("c{i}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let a = tmp.path().join(format!("a{i}"));
        let b = tmp.path().join(format!("b{i}"));
        if !(run_cli(sub, &cfg, &a, "1") && run_cli(sub, &cfg, &b, "2")) {
            bad.push(format!("{sub}#{i}: run failed"));
            continue;
        }
        let (fa, fb) = (dir_files(&a), dir_files(&b));
        files += fa.len();
        if fa.is_empty() || fa != fb {
            bad.push(format!("{sub}#{i}: outputs differ"));
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{} configs, {files} files identical across reruns (1 vs 2 threads) {}",
            REPRO_CONFIGS.len(),
            bad.join("; ")
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, o: Outcome| {
        println!("{} criterion {n}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, c1_decay_scale());
    report(2, c2_unperturbed());
    report(3, c3_theorem_instances());
    report(4, c4_oscillating());
    report(5, c5_spikes());
    let baseline = ensemble(2.5, 1e4, 200);
    report(6, c6_baseline(&baseline));
    report(7, c7_degraded());
    report(8, c8_coherence());
    report(9, c9_lil(&baseline));
    report(10, c10_reproducibility());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
