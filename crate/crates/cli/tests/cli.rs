use std::path::Path;
use std::process::{Command, Output};

fn franson(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_franson")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_config_reports_each_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.cfg"), "# nothing here\n").unwrap();
    let out = franson(dir.path(), &["run", "dynamics", "--config", "empty.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for key in ["gamma_a", "gamma_b", "dt", "n_steps", "n_t", "m"] {
        assert!(err.contains(&format!("{key}: missing")), "{key} not reported:\n{err}");
    }

    let out = franson(dir.path(), &["run", "--config", "empty.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("kind: missing"));
}

#[test]
fn bad_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(franson(dir.path(), &["run", "g2", "--epsilon", "-1"]).status.code(), Some(1));
    assert_eq!(franson(dir.path(), &["run", "g2", "--phi-fb", "half"]).status.code(), Some(1));
    assert_eq!(franson(dir.path(), &["run", "g2", "--threads", "0"]).status.code(), Some(1));
    assert_eq!(franson(dir.path(), &["run", "heatmap"]).status.code(), Some(1));
    assert_eq!(franson(dir.path(), &["run", "benchmark", "--feedback"]).status.code(), Some(1));
}

#[test]
fn oracle_output_is_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "kind = oracle\ngamma_a = 1\ngamma_b = 4\ndt = 0.05\nn_steps = 200\nn_t = 50\nphi_t = pi/4\n";
    std::fs::write(dir.path().join("o.cfg"), cfg).unwrap();
    let out = franson(dir.path(), &["run", "--config", "o.cfg", "--check", "--output", "out/o.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let first = std::fs::read(dir.path().join("out/o.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    for key in ["gamma_a", "gamma_b", "dt", "n_steps", "m", "phi_fb", "n_t", "phi_t", "feedback_enabled", "truncation", "photon_cutoff"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("# {key} = "))), "{key} missing from header");
    }
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "tau,g2_value");
    assert_eq!(body.len(), 1 + 401);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/o.json")).unwrap()).unwrap();
    assert_eq!(meta["kind"], "oracle");
    assert_eq!(meta["checks"][0]["pass"], true);
    assert_eq!(meta["config"]["gamma_b"], "4");

    let again = franson(dir.path(), &["run", "--config", "o.cfg", "--check", "--output", "out/o.csv"]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("out/o.csv")).unwrap(), first);
}

#[test]
fn feedback_g2_peak_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = franson(dir.path(), &["run", "g2", "--feedback", "--check"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g2.json")).unwrap()).unwrap();
    let tau = meta["summary"]["central_peak_tau"].as_f64().unwrap();
    assert!((tau + 1.0).abs() <= 0.2 + 1e-9, "peak at {tau}");
}

#[test]
fn violated_tolerance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = franson(dir.path(), &["run", "benchmark", "--check", "--epsilon", "0.3:2"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("FAIL"));
    // Without --check the same run succeeds.
    let out = franson(dir.path(), &["run", "benchmark", "--epsilon", "0.3:2"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn small_sweep_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "kind = sweep\ngamma_a_t_list = 1, 2\ngamma_b_t_list = 2\ndt = 0.125\n";
    std::fs::write(dir.path().join("s.cfg"), cfg).unwrap();
    let out = franson(dir.path(), &["run", "--config", "s.cfg", "--threads", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "gamma_a_t,gamma_b_t,v_no_fb,v_fb,ratio");
    assert_eq!(rows.len(), 3);
    for row in &rows[1..] {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[3] > v[2], "feedback should raise the visibility: {row}");
    }
}
