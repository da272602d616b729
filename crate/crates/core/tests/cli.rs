mod common;

use std::path::Path;
use std::process::{Command, Output};

use multiscm::panel::PanelData;
use multiscm::simlab::{generate, DgpConfig};
use tempfile::TempDir;

fn multiscm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiscm")).args(args).output().unwrap()
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

struct Fixture {
    dir: TempDir,
    csv: String,
    toml: String,
}

impl Fixture {
    fn new(panel: &PanelData) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (csv, toml) = common::write_fixture(panel, dir.path());
        Self {
            csv: csv.to_str().unwrap().into(),
            toml: toml.to_str().unwrap().into(),
            dir,
        }
    }

    fn out(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().into()
    }

    fn run(&self, sub: &str, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![sub, "--input", &self.csv, "--config", &self.toml, "--out", out];
        args.extend_from_slice(extra);
        multiscm(&args)
    }
}

fn dgp(k: usize, sigma: f64) -> PanelData {
    let cfg = DgpConfig {
        n_units: 12,
        t0: 10,
        k,
        noise_sigma: sigma,
        seed: 21,
        ..DgpConfig::default()
    };
    generate(&cfg, 0).unwrap().0
}

#[test]
fn fit_writes_simplex_weights_and_heuristic_nu() {
    let fx = Fixture::new(&dgp(3, 1.0));
    let out = fx.out("avg");
    let o = fx.run("fit", &out, &["--objective", "avg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let total: f64 = read_csv(&Path::new(&out).join("weights.csv"))
        .iter()
        .map(|r| r[1].parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() <= 1e-10, "weights sum to {total}");
    for f in ["imbalance.csv", "gaps.csv", "summary.json"] {
        assert!(Path::new(&out).join(f).exists(), "{f} missing");
    }

    let o = fx.run("fit", &fx.out("combined"), &[]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    let nu: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("nu = "))
        .expect("nu line")
        .trim()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&nu));
}

#[test]
fn holdout_needs_several_outcomes() {
    let fx = Fixture::new(&dgp(1, 1.0));
    let o = fx.run("diagnose", &fx.out("d"), &["--only", "holdout"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("requires K ≥ 2"));
}

#[test]
fn rank_one_spectrum_and_monotone_frontier() {
    let panel = PanelData::from_fn(8, 12, 1, 0, 9, |i, t, _| (1.0 + i as f64) * (0.5 + (t as f64).sin())).unwrap();
    let fx = Fixture::new(&panel);
    let out = fx.out("spec");
    let o = fx.run("diagnose", &out, &["--only", "spectrum", "--raw"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&Path::new(&out).join("spectrum.csv"));
    let top: f64 = rows[0][2].parse().unwrap();
    assert!((top - 1.0).abs() < 1e-9, "top share {top}");

    let fx = Fixture::new(&dgp(4, 1.0));
    let out = fx.out("frontier");
    let o = fx.run("diagnose", &out, &["--only", "frontier"]);
    assert!(o.status.success());
    let pts: Vec<(f64, f64)> = read_csv(&Path::new(&out).join("frontier.csv"))
        .iter()
        .map(|r| (r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    assert_eq!(pts.len(), 21);
    for w in pts.windows(2) {
        assert!(w[1].0 <= w[0].0 + 1e-7 && w[1].1 >= w[0].1 - 1e-7, "{w:?}");
    }
}

#[test]
fn noiseless_null_is_never_rejected() {
    let fx = Fixture::new(&dgp(3, 0.0));
    let out = fx.out("infer");
    let o = fx.run("infer", &out, &["--objective", "avg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&Path::new(&out).join("tests.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn joint_test_on_one_post_period_matches_per_period() {
    let fx = Fixture::new(&dgp(3, 1.0));
    let p = |extra: &[&str], name: &str| -> f64 {
        let out = fx.out(name);
        let o = fx.run("infer", &out, extra);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read_csv(&Path::new(&out).join("tests.csv"))[0][5].parse().unwrap()
    };
    assert_eq!(p(&["--objective", "cat"], "single"), p(&["--objective", "cat", "--joint"], "joint"));
}

#[test]
fn simulate_is_reproducible_and_rejects_unknown_presets() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = multiscm(&["simulate", "--preset", "appendix-c-rho1", "--reps", "1", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    assert_eq!(run("a"), run("b"));

    let o = multiscm(&["simulate", "--preset", "no-such-preset", "--out", dir.path().join("c").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_numerical_code() {
    let fx = Fixture::new(&dgp(3, 1.0));
    let o = fx.run("fit", &fx.out("nc"), &["--objective", "cat", "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let o = fx.run("fit", &fx.out("nc2"), &["--objective", "cat", "--max-iter", "1", "--allow-nonconverged"]);
    assert!(o.status.success());
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(multiscm(&["fit", "--objective", "bogus"]).status.code(), Some(2));
    assert_eq!(multiscm(&["--help"]).status.code(), Some(0));
}
