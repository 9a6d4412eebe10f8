use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vega(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vega"));
    cmd.args(args);
    if let Some(d) = out_dir {
        cmd.env("VEGA_OUTPUT_DIR", d);
    }
    cmd.output().expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_accepts_bundled_configs() {
    for name in ["hpo_asha.yml", "nas_dnet.yml"] {
        let o = vega(&["validate", config(name).to_str().unwrap()], None);
        assert!(
            o.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).contains("ok: "));
    }
}

#[test]
fn validate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.yml");
    std::fs::write(
        &path,
        "pipeline: [a]\na:\n  pipe_step:\n    type: NoSuchStep\n",
    )
    .unwrap();
    let o = vega(&["validate", path.to_str().unwrap()], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("NoSuchStep"));
}

#[test]
fn sample_prints_reproducible_json_lines() {
    let cfg = config("hpo_asha.yml");
    let args = [
        "sample",
        cfg.to_str().unwrap(),
        "--step",
        "hpo",
        "-n",
        "4",
        "--seed",
        "9",
    ];
    let a = vega(&args, None);
    let b = vega(&args, None);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<String> = stdout(&a).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 4);
    for l in lines {
        let v: serde_json::Value = serde_json::from_str(&l).unwrap();
        assert!(v.is_object());
    }
}

#[test]
fn enumerate_dnet_counts_small_grammar() {
    let o = vega(
        &[
            "enumerate-dnet",
            "--vocab",
            "2",
            "--ratios",
            "1",
            "--max-stem",
            "2",
            "--list",
            "3",
        ],
        None,
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("count: 26"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn report_rerenders_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = vega(
        &["run", config("hpo_asha.yml").to_str().unwrap()],
        Some(&out),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let before = std::fs::read(out.join("report.json")).unwrap();
    std::fs::remove_file(out.join("report.json")).unwrap();
    let r = vega(&["report", out.to_str().unwrap()], None);
    assert!(r.status.success());
    assert_eq!(std::fs::read(out.join("report.json")).unwrap(), before);
    assert_eq!(stdout(&r), stdout(&o));
}

#[test]
fn worker_serves_over_stdio() {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_vega"))
        .args([
            "worker",
            "--evaluator",
            r#"{"type":"Analytic","function":"sphere"}"#,
            "--id",
            "w",
        ])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"type\":\"shutdown\"}\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
