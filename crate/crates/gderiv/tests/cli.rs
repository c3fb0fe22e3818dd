//! End-to-end runs of the `gderiv` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gderiv_core::simulation::read_binary;
use tempfile::TempDir;

fn gderiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gderiv")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_with(kind: &str, dir: &TempDir, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write(dir.path(), &format!("{kind}.toml"), config);
    let out = dir.path().join(format!("out-{kind}-{}", extra.join("-").replace("--", "")));
    let mut args = vec![kind, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (gderiv(&args), out)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const CLASSIFY: &str = r#"
t = 0.5
conditioning = { type = "span", times = [0.5] }
[model]
type = "fractional_brownian"
hurst = 0.7
horizon = 1.0
"#;

#[test]
fn classify_reports_the_exact_coefficient() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_with("classify", &dir, CLASSIFY, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let verdict = std::fs::read_to_string(out.join("verdict.csv")).unwrap();
    let mut rows = csv::ReaderBuilder::new().flexible(true).from_reader(verdict.as_bytes());
    let last = rows.records().last().unwrap().unwrap();
    assert_eq!(&last[0], "Differentiates, coeff=1.4");
    let m = manifest(&out);
    assert_eq!(m["experiment"], "classify");
    assert_eq!(m["config"]["model"]["hurst"], 0.7);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(!m["coverage"]["classify"].as_array().unwrap().is_empty());
    assert!(m.get("wall_seconds").is_none());
    assert!(out.join("walltime.json").exists());
    assert!(std::fs::read_to_string(out.join("plot.gp")).unwrap().contains("verdict.csv"));
}

#[test]
fn malformed_hurst_names_the_field() {
    let dir = TempDir::new().unwrap();
    let (o, _) = run_with("classify", &dir, &CLASSIFY.replace("hurst = 0.7", "hurst = 1.5"), &[]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    assert!(e.contains("model.hurst") && e.contains("1.5"), "{e}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let (o, _) = run_with("classify", &dir, &format!("{CLASSIFY}bogus = 3\n"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("model.bogus"), "{}", stderr(&o));
    let (o, _) = run_with("classify", &dir, &format!("tolerence = 1\n{CLASSIFY}"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`tolerence`"), "{}", stderr(&o));
    let (o, _) = run_with("classify", &dir, "experiment = \"girsanov\"\n", &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("experiment"), "{}", stderr(&o));
}

#[test]
fn canonical_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_with("classify", &dir, CLASSIFY, &[]);
    assert_eq!(code(&o), 0);
    let m = manifest(&out);
    let json = write(dir.path(), "canonical.json", &serde_json::to_string(&m["config"]).unwrap());
    let out2 = dir.path().join("again");
    let o = gderiv(&["classify", "--config", json.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(manifest(&out2)["config_hash"], m["config_hash"]);
    assert_eq!(manifest(&out2)["config"], m["config"]);
    assert_eq!(std::fs::read(out.join("verdict.csv")).unwrap(), std::fs::read(out2.join("verdict.csv")).unwrap());
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = "t = 0.5\nspan = [0.3, 0.3]\n";
    let (o, _) = run_with("derivative", &dir, cfg, &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("span"), "{}", stderr(&o));
}

const SIMULATE: &str = "hurst = 0.3\nsteps = 32\npaths = 2000\nmethod = \"volterra\"\nexport_paths = 5\n";

#[test]
fn path_export_formats_agree() {
    let dir = TempDir::new().unwrap();
    let (o, csv_out) = run_with("simulate", &dir, SIMULATE, &["--format", "csv", "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (o, bin_out) = run_with("simulate", &dir, SIMULATE, &["--format", "binary", "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = std::fs::read(bin_out.join("paths.bin")).unwrap();
    assert_eq!(&bytes[..5], b"GDRV1");
    let cols = read_binary(&mut bytes.as_slice()).unwrap();
    assert_eq!(cols.n_paths, 5);
    let text = std::fs::read_to_string(csv_out.join("paths.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "path_id,t,W,B,Z");
    for (k, line) in lines.enumerate() {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[0] as usize, k / 33);
        assert_eq!(f[1], cols.times[k % 33]);
        assert_eq!(f[2], cols.w.as_ref().unwrap()[k]);
        assert_eq!(f[3], cols.b[k]);
        assert_eq!(f[4], cols.z[k]);
    }
    assert_eq!(text.lines().count(), 1 + 5 * 33);
    // The seed and format are part of the canonical config.
    assert_ne!(manifest(&csv_out)["config_hash"], manifest(&bin_out)["config_hash"]);
    assert_eq!(manifest(&csv_out)["config"]["seed"], 9);
}

#[test]
fn outputs_are_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let (a, out1) = run_with("simulate", &dir, SIMULATE, &["--threads", "1"]);
    let (b, out4) = run_with("simulate", &dir, SIMULATE, &["--threads", "4"]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    for f in ["paths.csv", "covariance.csv", "manifest.json"] {
        assert_eq!(std::fs::read(out1.join(f)).unwrap(), std::fs::read(out4.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn every_experiment_runs_and_records_coverage() {
    let dir = TempDir::new().unwrap();
    let quick = [
        ("cov", "points = 5\n"),
        ("derivative", ""),
        ("renormalize", ""),
        (
            "simulate",
            "paths = 4000\nsteps = 64\ndrift = { kind = \"linear\", slope = 0.0, intercept = 1.0 }\n\
             [mc]\nt = 0.5\nh_steps = [4, 2, 1]\nconditioning = { type = \"value\", s = 0.5 }\n",
        ),
        ("girsanov", "paths = 4000\nexport_paths = 2\n"),
        ("embed", "[nelson]\npaths = 4000\n"),
        ("counterexample", "n = 64\natom_checks = 64\n"),
        ("paper-suite", "criteria = [\"AC3\", \"AC4\"]\n"),
    ];
    for (kind, cfg) in quick {
        let (o, out) = run_with(kind, &dir, cfg, &[]);
        assert_eq!(code(&o), 0, "{kind}: {}", stderr(&o));
        let m = manifest(&out);
        let cov = m["coverage"].as_object().unwrap();
        assert!(!cov.is_empty() && cov.values().all(|v| !v.as_array().unwrap().is_empty()), "{kind}");
        for (name, _) in m["files"].as_object().unwrap() {
            assert!(out.join(name).exists(), "{kind}: {name}");
        }
    }
    let eta = std::fs::read_to_string(dir.path().join("out-girsanov-").join("paths.csv")).unwrap();
    assert!(eta.starts_with("path_id,t,W,B,Z,eta\n"));
}

#[test]
fn suite_reports_failures_and_skips() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_with("paper-suite", &dir, "criteria = [\"AC1\", \"AC2\"]\ntolerance_override = 1e-30\n", &[]);
    assert_eq!(code(&o), 4);
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.lines().nth(1).unwrap().starts_with("AC1,FAIL,"), "{report}");
    assert!(report.contains("AC3,SKIP,not selected"));

    let (o, out) = run_with("paper-suite", &dir, "criteria = [\"AC7\", \"AC13\"]\ndisable_circulant = true\n", &["--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("AC7,SKIP,circulant sampler disabled"), "{report}");
    assert!(report.contains("AC13,PASS,"), "{report}");
}
