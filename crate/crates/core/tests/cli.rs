use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contact-thermo"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["mass", "--model", "sphere"]).status.code(), Some(2));
    assert_eq!(run(&["mass", "--scale", "tan2pix"]).status.code(), Some(2));
    assert_eq!(run(&["mass", "--scale", "0.5"]).status.code(), Some(0));
    assert_eq!(run(&["maxent", "--obs", "cos2pix", "--targets", "2"]).status.code(), Some(2));
    let o = run(&["mass", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn errors_go_to_stderr() {
    let o = run(&["mass", "--model", "torus_2n1", "--n", "3"]);
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("torus_2n1"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# coarse\nquadrature.resolution = 16\nseed = 3\n").unwrap();
    let art = dir.path().join("mass.csv");
    let o = run(&[
        "mass",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "output.format=csv",
        "--emit",
        art.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&art).unwrap();
    assert!(text.starts_with("# contact-thermo mass"));
    assert!(text.contains("# quadrature.resolution = 16"));
    assert!(text.contains("# seed = 3"));
    assert!(text.contains("# content_sha256 = "));

    let bad = run(&["mass", "--set", "tol.conf=-1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn json_artifact_hash_matches_report() {
    use sha2::{Digest, Sha256};
    let o = run(&["maxent", "--obs", "cos2pix", "--targets", "0.3", "--format", "json", "--emit", "-"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["command"], "maxent");
    let report = serde_json::to_string(&v["report"]).unwrap();
    let want: String = Sha256::digest(report.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(v["content_sha256"].as_str().unwrap(), want);
    let p = v["report"]["solution"]["p"][0].as_f64().unwrap();
    assert!(p > 0.0 && p.is_finite());
}

#[test]
fn csv_body_hash_matches() {
    use sha2::{Digest, Sha256};
    let o = run(&["reeb", "--count", "3", "--seed", "5", "--emit", "-"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let hash_line = text.lines().find(|l| l.starts_with("# content_sha256 = ")).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let want: String = Sha256::digest(body.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hash_line.trim_start_matches("# content_sha256 = "), want);
    assert_eq!(body.lines().count(), 4);
}

#[test]
fn seeded_runs_repeat_and_thread_count_is_irrelevant() {
    let a = run(&["reeb", "--count", "5", "--seed", "11", "--emit", "-"]);
    let b = run(&["reeb", "--count", "5", "--seed", "11", "--emit", "-"]);
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["reeb", "--count", "5", "--seed", "12", "--emit", "-"]);
    assert_ne!(a.stdout, c.stdout);

    let one = run(&["mass", "--scale", "exp(0.2*cos2pix)", "--threads", "1", "--format", "json", "--emit", "-"]);
    let two = run(&["mass", "--scale", "exp(0.2*cos2pix)", "--threads", "2", "--format", "json", "--emit", "-"]);
    let r1: serde_json::Value = serde_json::from_str(&stdout(&one)).unwrap();
    let r2: serde_json::Value = serde_json::from_str(&stdout(&two)).unwrap();
    assert_eq!(r1["report"], r2["report"]);
}

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    std::fs::write(&path, "# p\n0\n0.5\n1\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["entropy", "--scale", "2"],
        vec!["flow", "--ham", "cos2pix", "--t", "0.1", "--point", "0.1,0.2,0.3"],
        vec!["cocycle-check", "--ham", "cos2pix", "--t", "0.1", "--samples", "4", "--n-max", "2", "--dt", "1e-2"],
        vec!["legendrian-sweep", "--obs", "cos2pix", "--from", "0", "--to", "1", "--steps", "10"],
        vec!["legendrian-sweep", "--obs", "cos2pix", "--path-file", path.to_str().unwrap()],
        vec!["hessian-check", "--h1", "cos2pix", "--h2", "sin2piy", "--resolution", "16"],
        vec!["pressure", "--resolution", "16", "--eps", "0.3", "--N", "1,2"],
        vec!["gibbs-check", "--resolution", "16", "--N", "1", "--centers", "2", "--dt", "0.5", "--t", "0.5"],
        vec!["selftest"],
    ];
    for c in cases {
        let o = run(&c);
        assert_eq!(o.status.code(), Some(0), "{c:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stdout.is_empty(), "{c:?}");
    }
}
