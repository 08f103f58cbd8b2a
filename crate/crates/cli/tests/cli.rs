use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semicomp::io;

const BIN: &str = env!("CARGO_BIN_EXE_semicomp");

const SIM: &str = r#"
[simulate]
n = 200
covariates = [{ kind = "normal" }, { kind = "binary", p = 0.4 }]
assignment = { kind = "logistic", intercept = -0.4, coefs = [0.6, 0.0] }
censoring = { admin = 3.0 }

[simulate.params]
alpha = [[1.1, 0.9, 1.2], [1.0, 1.1, 0.9]]
kappa = [[0.6, 0.4, 0.8], [0.4, 0.4, 0.6]]
beta = [
  [[0.3, -0.2], [0.2, 0.1], [0.0, 0.2]],
  [[0.3, -0.2], [0.2, 0.1], [0.0, 0.2]],
]
sigma = 0.5
"#;

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "seed = 3\nout = \"{}\"\n[sampler]\nchains = 3\niter = 400\nwarmup = 200\n[grid]\nmax = 1.5\nk = 5\n[estimate]\ndraws = 40\n{extra}\n{SIM}",
        dir.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--config").arg(config).args(args).output().unwrap()
}

fn ok(out: Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let files = ["draws.csv", "diagnostics.json", "estimands.csv", "states.csv", "survival.csv", "potential_outcomes.csv"];
    let mut contents = Vec::new();
    for d in &dirs {
        let cfg = write_config(d.path(), "");
        for c in ["simulate", "fit", "estimate"] {
            ok(run(&cfg, &[c]));
        }
        contents.push(files.map(|f| fs::read(d.path().join("out").join(f)).unwrap()));
    }
    for (k, f) in files.iter().enumerate() {
        assert!(contents[0][k] == contents[1][k], "{f} differs between runs");
    }
    // and rerunning fit in place keeps the same bytes
    let cfg = dirs[0].path().join("run.toml");
    ok(run(&cfg, &["fit"]));
    assert!(fs::read(dirs[0].path().join("out/draws.csv")).unwrap() == contents[0][0]);
}

#[test]
fn estimate_without_fit_names_the_missing_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "");
    ok(run(&cfg, &["simulate"]));
    let out = run(&cfg, &["estimate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("draws.csv"), "{err}");
}

#[test]
fn full_pipeline_on_two_hundred_subjects() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "[data]\nuse_matched = true\nscale = [\"x1\"]\n[ppc]\nc_admin = 3.0\n");
    for c in ["simulate", "preprocess", "fit", "estimate", "ppc", "report"] {
        ok(run(&cfg, &[c]));
    }
    let out = d.path().join("out");
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["max_rhat"].as_f64().unwrap() > 0.9);
    assert!(diag["min_ess"].as_f64().unwrap() > 0.0);
    assert!(diag["warnings"].is_array());

    let ppc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ppc.json")).unwrap()).unwrap();
    let p = ppc["pppv_ks"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(ppc["B"].as_u64(), Some(40));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["max_rhat"], diag["max_rhat"]);
    for f in ["diagonals.csv", "survival_curves.csv", "frailty_density.csv", "matched.csv", "preprocess_report.json", "truth.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    for c in ["simulate", "preprocess", "fit", "estimate", "ppc", "report"] {
        assert!(out.join(format!("config.{c}.toml")).is_file());
    }

    // every emitted CSV reads back
    let (matched, cov) = io::read_subjects(&out.join("matched.csv"), None).unwrap();
    assert_eq!(cov, ["x1", "x2"]);
    let table = io::read_draws(&out.join("draws.csv")).unwrap();
    assert_eq!(table.params.len(), 3 * 200);
    let (ids, draws) = io::read_potential_outcomes(&out.join("potential_outcomes.csv")).unwrap();
    assert_eq!((ids.len(), draws.len()), (matched.len(), 40));
    let cells = io::read_estimands(&out.join("estimands.csv")).unwrap();
    assert_eq!(cells.len(), 2 * 15);
    for f in ["states.csv", "survival.csv", "diagonals.csv", "survival_curves.csv", "frailty_density.csv"] {
        let (_, rows) = io::read_table(&out.join(f)).unwrap();
        assert!(!rows.is_empty(), "{f}");
    }
}

#[test]
fn malformed_input_is_a_validation_error_with_line_number() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("bad.csv");
    fs::write(&data, "id,z,y_r,delta_r,y_t,delta_t\n1,0,1.0,1,2.0,1\n2,1,1.5,0,1.5,x\n").unwrap();
    let cfg = write_config(d.path(), "");
    let out = run(&cfg, &["fit", "--input", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3") && err.contains("delta_t"), "{err}");
}

#[test]
fn separated_propensity_model_is_a_numerical_failure() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("sep.csv");
    let mut text = String::from("id,z,y_r,delta_r,y_t,delta_t,x1\n");
    for i in 0..20 {
        let z = (i >= 10) as u8;
        text.push_str(&format!("{i},{z},1.0,0,1.0,1,{}\n", i as f64));
    }
    fs::write(&data, text).unwrap();
    let cfg = write_config(d.path(), "");
    let out = run(&cfg, &["preprocess", "--input", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_sampler_settings_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "");
    ok(run(&cfg, &["simulate"]));
    let out = run(&cfg, &["fit", "--iter", "100", "--warmup", "100"]);
    assert_eq!(out.status.code(), Some(2));
}
