//! Experiment orchestration. Every subcommand computes its artifacts in
//! memory, in a fixed order, and a single writer puts them on disk together
//! with a manifest; identical config and seed give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Kind};
use crate::criteria::{self, CriteriaOptions, CriterionReport, DeltaOutcome, MuValue, SumVerdict};
use crate::decay_scale::DecayScale;
use crate::diagnostics::classify;
use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearityModel;
use crate::ode::{self, Form, Trajectory};
use crate::perturbations::{NoiseIntensity, NoiseKind, PerturbationKind, SpikedFunction};
use crate::sde::{self, EnsembleSpec, SdePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Ode,
    Sde,
    Criteria,
    Construct,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Ode => "ode",
            Command::Sde => "sde",
            Command::Criteria => "criteria",
            Command::Construct => "construct",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// `(unit, message)` for every unit of work that failed
    pub failures: Vec<(String, String)>,
    /// units attempted
    pub units: usize,
}

impl Outcome {
    fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.artifacts.push(Artifact {
            name: name.into(),
            bytes,
        });
    }

    fn fail(&mut self, unit: impl Into<String>, e: impl ToString) {
        self.failures.push((unit.into(), e.to_string()));
    }

    /// Nothing useful was computed.
    pub fn all_failed(&self) -> bool {
        self.units > 0 && self.failures.len() == self.units
    }
}

/// 17 significant digits, `.` decimal, no locale.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Whitespace-separated columns with a `#` header line.
fn dat_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<u8> {
    let mut s = format!("# {}\n", header.join(" "));
    for r in rows {
        let cols: Vec<String> = r.into_iter().map(num).collect();
        s.push_str(&cols.join(" "));
        s.push('\n');
    }
    s.into_bytes()
}

fn kv_bytes(kv: &[(String, String)]) -> Vec<u8> {
    let mut s = String::new();
    for (k, v) in kv {
        let _ = writeln!(s, "{k}={v}");
    }
    s.into_bytes()
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs `cmd` and returns its artifacts followed by `manifest.txt`.
pub fn execute(
    cmd: Command,
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    seed_override: Option<u64>,
) -> Result<Outcome> {
    let seed = seed_override.or(cfg.seed);
    let mut out = Outcome::default();
    match cmd {
        Command::Run => match cfg.kind {
            Kind::Ode | Kind::OdeInternal => {
                run_ode(cfg, &mut out)?;
                run_criteria(cfg, &mut out)?;
            }
            Kind::Sde => {
                run_sde(cfg, seed, &mut out)?;
                run_criteria(cfg, &mut out)?;
            }
        },
        Command::Ode => run_ode(cfg, &mut out)?,
        Command::Sde => run_sde(cfg, seed, &mut out)?,
        Command::Criteria => run_criteria(cfg, &mut out)?,
        Command::Construct => run_construct(cfg, &mut out)?,
        Command::Sweep => run_sweep(cfg, &mut out)?,
    }

    let mut kv: Vec<(String, String)> = vec![
        ("command".into(), cmd.name().into()),
        ("crate_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("config_sha256".into(), sha256_hex(config_bytes)),
    ];
    match seed {
        Some(s) => {
            kv.push(("master_seed".into(), s.to_string()));
            let src = if seed_override.is_some() { "cli" } else { "config" };
            kv.push(("seed_source".into(), src.into()));
        }
        None => kv.push(("master_seed".into(), "none".into())),
    }
    kv.push(("units".into(), out.units.to_string()));
    kv.push(("failures".into(), out.failures.len().to_string()));
    for (unit, msg) in &out.failures {
        kv.push((format!("failure.{unit}"), msg.replace('\n', " ")));
    }
    for a in &out.artifacts {
        kv.push((format!("file.{}", a.name), sha256_hex(&a.bytes)));
    }
    let manifest = kv_bytes(&kv);
    out.push("manifest.txt", manifest);
    Ok(out)
}

/// The single writer.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
    }
    Ok(())
}

fn criteria_options(cfg: &ExperimentConfig) -> CriteriaOptions {
    CriteriaOptions {
        t_end: cfg.criteria.t_end.unwrap_or(cfg.t_end),
        eps_grid: cfg.criteria.eps.clone(),
        h_list: cfg.criteria.h.clone(),
        tolerances: cfg.tolerances,
        ..Default::default()
    }
}

fn integrate(cfg: &ExperimentConfig, model: &NonlinearityModel, xi: f64) -> Result<Trajectory> {
    let g = cfg.build_forcing(model)?;
    match cfg.kind {
        Kind::OdeInternal => {
            let shift = ode::internal_shift(&g)?;
            let z0 = xi + g.tail_integral_g(0.0)?;
            let mut traj = ode::integrate_internal(model, &shift, z0, cfg.t_end, &cfg.step)?;
            // back to x = z + s, x' = z' + g
            for ((t, z), dz) in traj.times.iter().zip(traj.values.iter_mut()).zip(traj.derivatives.iter_mut()) {
                *z += shift(*t);
                *dz += g.g(*t);
            }
            traj.xi = xi;
            Ok(traj)
        }
        _ => ode::integrate_ode(model, &g, xi, cfg.t_end, &cfg.step),
    }
}

fn run_ode(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let model = cfg.build_model()?;
    let scale = cfg.build_scale()?;
    let mut kv: Vec<(String, String)> = Vec::new();
    for (i, &xi) in cfg.xi.iter().enumerate() {
        out.units += 1;
        let key = format!("xi[{i}]");
        kv.push((key.clone(), num(xi)));
        let traj = match integrate(cfg, &model, xi) {
            Ok(t) => t,
            Err(e) => {
                kv.push((format!("{key}.status"), format!("failed: {e}")));
                out.fail(format!("ode.{key}"), e);
                continue;
            }
        };
        let averaged = |t: f64| traj.averaged_from.is_some_and(|a| t >= a);
        let flag = |t: f64| if averaged(t) { "averaged" } else { "ok" };
        let rows = traj
            .times
            .iter()
            .zip(&traj.values)
            .zip(&traj.derivatives)
            .map(|((&t, &x), &d)| vec![num(t), num(x), num(d), flag(t).into()]);
        out.push(format!("ode_xi{i}_trajectory.csv"), csv_bytes(&["t", "x", "dxdt", "flag"], rows)?);

        let diag = ode::diagnostics(&traj, &scale);
        let rows = diag
            .t
            .iter()
            .zip(&diag.ratio)
            .zip(&diag.derivative_ratio)
            .map(|((&t, &r), &d)| vec![num(t), num(r), num(d), flag(t).into()]);
        out.push(
            format!("ode_xi{i}_ratio.csv"),
            csv_bytes(&["t", "ratio", "derivative_ratio", "flag"], rows)?,
        );
        let rows = diag
            .t
            .iter()
            .zip(&diag.ratio)
            .zip(&diag.derivative_ratio)
            .map(|((&t, &r), &d)| vec![t, r, d]);
        out.push(
            format!("ode_xi{i}_ratio.dat"),
            dat_bytes(&["t", "ratio", "derivative_ratio"], rows),
        );

        let cls = classify(&diag.ratio_series(), &cfg.tolerances);
        let dcls = classify(&diag.derivative_series(), &cfg.tolerances);
        kv.push((format!("{key}.status"), "ok".into()));
        let form = match traj.form {
            Form::External => "external",
            Form::Internal => "internal",
        };
        kv.push((format!("{key}.form"), form.into()));
        kv.push((format!("{key}.limit"), cls.limit.label()));
        if let Some(ev) = cls.evidence {
            kv.push((format!("{key}.window_mean"), num(ev.mean)));
            kv.push((format!("{key}.window_std"), num(ev.std)));
            kv.push((format!("{key}.window_drift"), num(ev.drift)));
        }
        kv.push((format!("{key}.derivative_limit"), dcls.limit.label()));
        kv.push((format!("{key}.x_end"), num(traj.last().1)));
        kv.push((format!("{key}.accepted_steps"), traj.accepted_steps.to_string()));
        kv.push((format!("{key}.rejected_steps"), traj.rejected_steps.to_string()));
        kv.push((format!("{key}.averaged_from"), opt_num(traj.averaged_from)));
        kv.push((format!("{key}.averaging_bound"), num(traj.averaging_bound)));
    }
    out.push("ode_summary.txt", kv_bytes(&kv));
    Ok(())
}

fn path_files(path: &SdePath, scale: &DecayScale, out: &mut Outcome) -> Result<()> {
    let i = path.path_index;
    let ratios = sde::ratio_series(path, scale);
    let rows = path
        .times
        .iter()
        .zip(&path.states)
        .filter(|(&t, _)| t >= 1.0)
        .zip(&ratios)
        .map(|((&t, &x), &(_, r))| vec![num(t), num(x), num(r), "ok".into()]);
    out.push(format!("sde_path{i}_ratio.csv"), csv_bytes(&["t", "x", "ratio", "flag"], rows)?);
    out.push(
        format!("sde_path{i}_ratio.dat"),
        dat_bytes(&["t", "ratio"], ratios.iter().map(|&(t, r)| vec![t, r])),
    );
    for (h, _) in &path.partners {
        let q = sde::scaled_increment(path, *h, scale)?;
        let rows = q.iter().map(|&(t, v)| vec![num(t), num(v), "ok".into()]);
        out.push(
            format!("sde_path{i}_increment_h{h}.csv"),
            csv_bytes(&["t", "scaled_increment", "flag"], rows)?,
        );
    }
    Ok(())
}

fn run_sde(cfg: &ExperimentConfig, seed: Option<u64>, out: &mut Outcome) -> Result<()> {
    let master_seed = seed.ok_or_else(|| Error::Config {
        field: "seed".into(),
        msg: "an SDE run needs a master seed (config or --seed)".into(),
    })?;
    let model = cfg.build_model()?;
    let scale = cfg.build_scale()?;
    let sigma = cfg.build_noise()?;
    let spec = EnsembleSpec {
        xi: cfg.xi[0],
        t_end: cfg.t_end,
        paths: cfg.ensemble.paths,
        master_seed,
        params: cfg.sde.clone(),
        tolerances: cfg.tolerances,
        lil_window: cfg.ensemble.lil_window,
    };
    let (summary, kept) = sde::run_ensemble(&model, &sigma, &spec, cfg.ensemble.keep)?;
    out.units += summary.paths.len();

    let hs: Vec<f64> = cfg.sde.increments.clone();
    let mut header: Vec<String> = [
        "index",
        "status",
        "limit",
        "ratio_mean",
        "ratio_std",
        "ratio_drift",
        "x_end",
        "decay_time_ratio",
        "lil_max",
        "split_steps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for h in &hs {
        for col in ["limit", "mean", "std"] {
            header.push(format!("increment_h{h}_{col}"));
        }
    }
    let mut rows = Vec::new();
    for p in &summary.paths {
        let mut r = vec![p.index.to_string()];
        match &p.outcome {
            Ok(s) => {
                r.push("ok".into());
                r.push(s.limit.label());
                let w = s.ratio_window;
                r.push(opt_num(w.map(|w| w.mean)));
                r.push(opt_num(w.map(|w| w.std)));
                r.push(opt_num(w.map(|w| w.drift)));
                r.push(num(s.x_end));
                r.push(num(s.decay_time_ratio));
                r.push(opt_num(s.lil_max));
                r.push(s.split_steps.to_string());
                for inc in &s.increments {
                    r.push(inc.limit.label());
                    r.push(opt_num(inc.window.map(|w| w.mean)));
                    r.push(opt_num(inc.window.map(|w| w.std)));
                }
            }
            Err(e) => {
                out.fail(format!("sde.path{}", p.index), e);
                r.push("failed".into());
                r.resize(header.len(), String::new());
            }
        }
        rows.push(r);
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    out.push("ensemble_paths.csv", csv_bytes(&header_refs, rows)?);

    let mut kv: Vec<(String, String)> = vec![
        ("master_seed".into(), summary.master_seed.to_string()),
        ("paths".into(), summary.paths.len().to_string()),
        ("fraction_minus_one".into(), num(summary.fractions[0])),
        ("fraction_zero".into(), num(summary.fractions[1])),
        ("fraction_plus_one".into(), num(summary.fractions[2])),
        ("fraction_unclassified".into(), num(summary.fractions[3])),
    ];
    let classified: Vec<_> = summary.classified().collect();
    let majority = {
        let plus = classified.iter().filter(|(c, _)| *c == 1).count();
        let minus = classified.iter().filter(|(c, _)| *c == -1).count();
        let zero = classified.len() - plus - minus;
        if plus >= minus && plus >= zero {
            1
        } else if minus >= zero {
            -1
        } else {
            0
        }
    };
    kv.push(("majority_class".into(), majority.to_string()));
    for (k, h) in hs.iter().enumerate() {
        // share of classified paths whose increment window mean is near -λ
        let near = classified
            .iter()
            .filter(|(c, s)| {
                s.increments
                    .get(k)
                    .and_then(|inc| inc.window)
                    .is_some_and(|w| (w.mean + *c as f64).abs() <= 0.15)
            })
            .count();
        let share = if classified.is_empty() {
            f64::NAN
        } else {
            near as f64 / classified.len() as f64
        };
        kv.push((format!("increment_h{h}.near_minus_limit"), num(share)));
    }
    let mut lil: Vec<f64> = summary
        .paths
        .iter()
        .filter_map(|p| p.outcome.as_ref().ok().and_then(|s| s.lil_max))
        .collect();
    lil.sort_by(|a, b| b.total_cmp(a));
    let top = lil.len().div_ceil(10);
    if top > 0 {
        let mean = lil[..top].iter().sum::<f64>() / top as f64;
        kv.push(("lil_top_decile_mean".into(), num(mean)));
    }
    out.push("ensemble_summary.txt", kv_bytes(&kv));

    for p in &kept {
        path_files(p, &scale, out)?;
    }
    Ok(())
}

fn series_csv(series: &[(f64, f64)]) -> Result<Vec<u8>> {
    csv_bytes(
        &["t", "ratio", "flag"],
        series.iter().map(|&(t, v)| vec![num(t), num(v), "ok".into()]),
    )
}

fn run_criteria(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let model = cfg.build_model()?;
    let scale = cfg.build_scale()?;
    let g = match &cfg.forcing {
        Some(_) => Some(cfg.build_forcing(&model)?),
        None => None,
    };
    let sigma = match &cfg.noise {
        Some(_) => Some(cfg.build_noise()?),
        None => None,
    };
    out.units += 1;
    let report = match criteria::evaluate(&scale, g.as_ref(), sigma.as_ref(), &criteria_options(cfg)) {
        Ok(r) => r,
        Err(e) => {
            out.fail("criteria", &e);
            out.push("criteria.txt", format!("status=failed: {e}\n").into_bytes());
            return Ok(());
        }
    };
    write_report(&report, out)
}

fn write_report(report: &CriterionReport, out: &mut Outcome) -> Result<()> {
    out.push("criteria.txt", kv_bytes(&report.key_values()));
    if let Some(c) = &report.det_tail_condition {
        out.push("criteria_det_tail.csv", series_csv(&c.series)?);
    }
    if let Some(c) = &report.det_pointwise_condition {
        out.push("criteria_det_pointwise.csv", series_csv(&c.series)?);
    }
    if !report.sf.is_empty() {
        let rows = report.sf.iter().flat_map(|r| {
            r.partial_sums
                .iter()
                .map(move |(n, s)| vec![num(r.eps), num(r.h), n.to_string(), num(*s)])
        });
        out.push("criteria_sf.csv", csv_bytes(&["eps", "h", "N", "partial_sum"], rows)?);
    }
    Ok(())
}

/// Samples on a uniform grid plus the outer seams of every spike, which
/// carry the C¹ mismatch in the `seam_check` column.
fn construct_rows(
    t_end: f64,
    per_unit: usize,
    value: impl Fn(f64) -> f64,
    spiked: Option<&SpikedFunction>,
) -> Vec<(f64, f64, Option<f64>)> {
    let n = (t_end * per_unit as f64).ceil() as u64;
    let mut rows: Vec<(f64, f64, Option<f64>)> = (0..=n)
        .map(|k| (k as f64 / per_unit as f64).min(t_end))
        .map(|t| (t, value(t), None))
        .collect();
    if let Some(s) = spiked {
        let mut k = 0u64;
        while (k as f64) <= t_end {
            let [a, _, b] = s.seams(k);
            let m = s.seam_mismatch(k);
            for t in [a, b] {
                if t <= t_end {
                    rows.push((t, value(t), Some(m)));
                }
            }
            k += 1;
        }
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.2.is_some().cmp(&x.2.is_some())));
    rows.dedup_by(|later, earlier| later.0 == earlier.0 && later.2.is_none());
    rows
}

fn run_construct(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let model = cfg.build_model()?;
    let cc = &cfg.construct;
    let mut any = false;
    if cfg.forcing.is_some() {
        any = true;
        out.units += 1;
        let g = cfg.build_forcing(&model)?;
        let spiked = match g.kind() {
            PerturbationKind::Spiked(s) => Some(s),
            _ => None,
        };
        let rows = construct_rows(cc.t_end, cc.samples_per_unit, |t| g.g(t), spiked);
        out.push(
            "construct_forcing.csv",
            csv_bytes(
                &["t", "g", "seam_check"],
                rows.iter().map(|(t, v, m)| vec![num(*t), num(*v), opt_num(*m)]),
            )?,
        );
        out.push(
            "construct_forcing.dat",
            dat_bytes(&["t", "g"], rows.iter().map(|(t, v, _)| vec![*t, *v])),
        );
    }
    if cfg.noise.is_some() {
        any = true;
        out.units += 1;
        let sigma = cfg.build_noise()?;
        let spiked = match sigma.kind() {
            NoiseKind::SpikedSquare(s) => Some(s),
            _ => None,
        };
        let rows = construct_rows(cc.t_end, cc.samples_per_unit, |t| sigma.sigma(t).powi(2), spiked);
        out.push(
            "construct_noise.csv",
            csv_bytes(
                &["t", "sigma2", "seam_check"],
                rows.iter().map(|(t, v, m)| vec![num(*t), num(*v), opt_num(*m)]),
            )?,
        );
        out.push(
            "construct_noise.dat",
            dat_bytes(&["t", "sigma2"], rows.iter().map(|(t, v, _)| vec![*t, *v])),
        );
    }
    if !any {
        return Err(Error::Config {
            field: "forcing".into(),
            msg: "construct needs a [forcing] or [noise] table".into(),
        });
    }
    Ok(())
}

/// One row of the criteria coherence table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub beta: f64,
    pub gamma: f64,
    pub sigma_l2: bool,
    pub mu: Option<MuValue>,
    pub sf: Option<SumVerdict>,
    pub delta: Option<SumVerdict>,
    /// within `band` of a threshold
    pub near_threshold: bool,
    /// all verdicts match the closed-form thresholds and each other
    pub agree: bool,
}

pub fn sweep_row(beta: f64, gamma: f64, c: f64, band: f64, opts: &CriteriaOptions) -> Result<SweepRow> {
    let model = NonlinearityModel::pure_power(1.0, beta)?;
    let scale = DecayScale::new(model)?;
    let sigma = NoiseIntensity::power_decay(c, gamma)?;
    let mu_t = (beta + 1.0) / (2.0 * (beta - 1.0));
    let sf_t = beta / (beta - 1.0);
    let near_threshold = [0.5, mu_t, sf_t].iter().any(|th| (gamma - th).abs() < band);
    let sigma_l2 = sigma.is_square_integrable();
    if !sigma_l2 {
        return Ok(SweepRow {
            beta,
            gamma,
            sigma_l2,
            mu: None,
            sf: None,
            delta: None,
            near_threshold,
            agree: gamma <= 0.5,
        });
    }
    let mu = criteria::compute_mu(&scale, &sigma)?;
    let sf = criteria::sum_sf(&scale, &sigma, 1.0, 1.0)?.verdict;
    let delta = match criteria::delta_integral_test(&scale, &sigma, &opts.eps_grid)? {
        DeltaOutcome::Evaluated { verdict, .. } => verdict,
        _ => SumVerdict::Inconclusive,
    };
    let mu_zero = mu.value == MuValue::Zero;
    let sf_finite = sf == SumVerdict::Finite;
    let agree = gamma > 0.5
        && mu_zero == (gamma > mu_t)
        && sf_finite == (gamma > sf_t)
        && (!sf_finite || mu_zero)
        && (delta == SumVerdict::Finite) == mu_zero
        && mu.consistent();
    Ok(SweepRow {
        beta,
        gamma,
        sigma_l2,
        mu: Some(mu.value),
        sf: Some(sf),
        delta: Some(delta),
        near_threshold,
        agree,
    })
}

fn run_sweep(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let sw = &cfg.sweep;
    let opts = criteria_options(cfg);
    let cells: Vec<(f64, f64)> = sw
        .betas
        .iter()
        .flat_map(|&b| sw.gammas.iter().map(move |&g| (b, g)))
        .collect();
    let rows: Vec<(f64, f64, Result<SweepRow>)> = cells
        .par_iter()
        .map(|&(b, g)| (b, g, sweep_row(b, g, sw.c, sw.band, &opts)))
        .collect();
    out.units += rows.len();
    let mut csv_rows = Vec::new();
    let mut dat_rows = Vec::new();
    for (b, g, r) in rows {
        match r {
            Ok(r) => {
                let label = |v: Option<SumVerdict>| v.map_or("skipped".to_string(), |v| v.label().into());
                csv_rows.push(vec![
                    num(b),
                    num(g),
                    r.sigma_l2.to_string(),
                    r.mu.map_or("skipped".into(), |m| m.label()),
                    label(r.sf),
                    label(r.delta),
                    r.near_threshold.to_string(),
                    r.agree.to_string(),
                ]);
                let bit = |x: bool| if x { 1.0 } else { 0.0 };
                dat_rows.push(vec![
                    b,
                    g,
                    bit(r.mu == Some(MuValue::Zero)),
                    bit(r.sf == Some(SumVerdict::Finite)),
                ]);
            }
            Err(e) => {
                out.fail(format!("sweep.beta{b}.gamma{g}"), &e);
                csv_rows.push(vec![
                    num(b),
                    num(g),
                    String::new(),
                    format!("failed: {e}"),
                    String::new(),
                    String::new(),
                    String::new(),
                    "false".into(),
                ]);
            }
        }
    }
    out.push(
        "sweep.csv",
        csv_bytes(
            &["beta", "gamma", "sigma_L2", "mu", "Sf", "delta_test", "near_threshold", "agree"],
            csv_rows,
        )?,
    );
    out.push(
        "sweep.dat",
        dat_bytes(&["beta", "gamma", "mu_is_zero", "Sf_finite"], dat_rows),
    );
    Ok(())
}
