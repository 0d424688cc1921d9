use std::path::Path;
use std::process::{Command, Output};

fn rvdecay(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvdecay"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_kv(path: &Path) -> Vec<(String, String)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn get<'a>(kv: &'a [(String, String)], key: &str) -> &'a str {
    &kv.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("missing {key}")).1
}

const POWER_ODE: &str = r#"
kind = "ode"
t_end = 1e4
[model]
family = "pure_power"
beta = 3.0
[forcing]
type = "power_decay"
c = 2.0
p = 3.0
"#;

#[test]
fn ode_power_decay_preserves_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", POWER_ODE);
    let out = tmp.path().join("out");
    let o = rvdecay(&["run"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_kv(&out.join("ode_summary.txt"));
    assert_eq!(get(&summary, "xi[0].limit"), "1");
    let crit = read_kv(&out.join("criteria.txt"));
    assert_eq!(get(&crit, "det_tail_condition"), "holds");

    let manifest = read_kv(&out.join("manifest.txt"));
    let cfg_hash = rvdecay::runner::sha256_hex(&std::fs::read(&cfg).unwrap());
    assert_eq!(get(&manifest, "config_sha256"), cfg_hash);
    // every listed file exists with the recorded hash
    for (k, v) in manifest.iter().filter(|(k, _)| k.starts_with("file.")) {
        let bytes = std::fs::read(out.join(&k["file.".len()..])).unwrap();
        assert_eq!(&rvdecay::runner::sha256_hex(&bytes), v);
    }
}

#[test]
fn unperturbed_ratio_file_is_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = POWER_ODE.replace("type = \"power_decay\"\nc = 2.0\np = 3.0", "type = \"zero\"");
    let cfg = write(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("out");
    assert!(rvdecay(&["ode"], &cfg, &out).status.success());
    let mut rdr = csv::Reader::from_path(out.join("ode_xi0_ratio.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["t", "ratio", "derivative_ratio", "flag"]
    );
    let mut rows = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        let ratio: f64 = r[1].parse().unwrap();
        assert!((ratio - 1.0).abs() < 1e-6, "{ratio}");
        assert_eq!(&r[3], "ok");
        // 17 significant digits
        assert_eq!(r[0].split('e').next().unwrap().len(), 18);
        rows += 1;
    }
    assert!(rows > 100);
    let dat = std::fs::read_to_string(out.join("ode_xi0_ratio.dat")).unwrap();
    assert!(dat.starts_with("# t ratio derivative_ratio\n"));
    assert_eq!(dat.lines().nth(1).unwrap().split(' ').count(), 3);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = write(tmp.path(), "bad.toml", &POWER_ODE.replace("p = 3.0", "p = 3.0\nq = 1"));
    let o = rvdecay(&["ode"], &bad, &out);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line") && err.contains("q"), "{err}");

    let missing_seed = write(
        tmp.path(),
        "sde.toml",
        "kind = \"sde\"\nt_end = 100.0\n[model]\nfamily = \"pure_power\"\nbeta = 3.0\n[noise]\ntype = \"power_decay\"\nc = 1.0\ngamma = 2.5\n",
    );
    assert_eq!(rvdecay(&["sde"], &missing_seed, &out).status.code(), Some(2));
    assert_eq!(
        rvdecay(&["ode"], &tmp.path().join("absent.toml"), &out).status.code(),
        Some(2)
    );
    assert!(!out.exists());
}

#[test]
fn runtime_failure_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    // the internal form needs a convergent tail integral
    let text = POWER_ODE
        .replace("kind = \"ode\"", "kind = \"ode-internal\"")
        .replace("p = 3.0", "p = 0.5");
    let cfg = write(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("out");
    let o = rvdecay(&["ode"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read_kv(&out.join("manifest.txt"));
    assert_eq!(get(&manifest, "failures"), "1");
    assert!(get(&manifest, "failure.ode.xi[0]").contains("tail undefined"));
}

#[test]
fn criteria_on_divergent_noise_skips_downstream() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "kind = \"ode\"\nt_end = 100.0\n[model]\nfamily = \"pure_power\"\nbeta = 3.0\n[noise]\ntype = \"power_decay\"\nc = 1.0\ngamma = 0.4\n",
    );
    let out = tmp.path().join("out");
    assert!(rvdecay(&["criteria"], &cfg, &out).status.success());
    let kv = read_kv(&out.join("criteria.txt"));
    assert_eq!(get(&kv, "sigma_L2"), "false");
    assert_eq!(get(&kv, "downstream"), "skipped");
    assert!(!kv.iter().any(|(k, _)| k.starts_with("mu") || k.starts_with("Sf")));
}

#[test]
fn construct_spikes_has_seam_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "kind = \"ode\"\nt_end = 10.0\n[model]\nfamily = \"pure_power\"\nbeta = 3.0\n[forcing]\ntype = \"spiked\"\nc = 1.0\np = 2.0\ngrowth = \"linear\"\n[construct]\nt_end = 30.0\n",
    );
    let out = tmp.path().join("out");
    assert!(rvdecay(&["construct"], &cfg, &out).status.success());
    let mut rdr = csv::Reader::from_path(out.join("construct_forcing.csv")).unwrap();
    let mut seams = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        if !r[2].is_empty() {
            seams += 1;
            assert!(r[2].parse::<f64>().unwrap() < 1e-6);
        }
    }
    assert_eq!(seams, 61);
}

#[test]
fn sweep_table_matches_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "kind = \"ode\"\nt_end = 10.0\n[model]\nfamily = \"pure_power\"\nbeta = 3.0\n",
    );
    let out = tmp.path().join("out");
    assert!(rvdecay(&["sweep"], &cfg, &out).status.success());
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let mut n = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        let beta: f64 = r[0].parse().unwrap();
        let gamma: f64 = r[1].parse().unwrap();
        let finite = &r[4] == "finite";
        assert_eq!(finite, gamma > beta / (beta - 1.0), "{beta} {gamma}");
        assert_eq!(&r[7], "true");
        n += 1;
    }
    assert_eq!(n, 52);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"sde\"\nt_end = 50.0\nseed = 1\n[model]\nfamily = \"pure_power\"\nbeta = 3.0\n[noise]\ntype = \"power_decay\"\nc = 1.0\ngamma = 2.5\n[ensemble]\npaths = 3\nkeep = 1\n";
    let cfg = write(tmp.path(), "c.toml", text);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(rvdecay(&["sde"], &cfg, &a).status.success());
    assert!(rvdecay(&["sde", "--seed", "2"], &cfg, &b).status.success());
    assert!(rvdecay(&["sde", "--seed", "1"], &cfg, &c).status.success());
    let paths = |d: &Path| std::fs::read(d.join("ensemble_paths.csv")).unwrap();
    assert_ne!(paths(&a), paths(&b));
    assert_eq!(paths(&a), paths(&c));
    let m = read_kv(&b.join("manifest.txt"));
    assert_eq!(get(&m, "master_seed"), "2");
    assert_eq!(get(&m, "seed_source"), "cli");
}
