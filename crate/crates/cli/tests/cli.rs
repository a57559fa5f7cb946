use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn affvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affvol"))
        .args(args)
        .env_remove("AFFVOL_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

#[test]
fn riccati_on_zero_f_writes_zero_psi() {
    let out = tempfile::tempdir().unwrap();
    let o = affvol(&[
        "riccati",
        &cfg("degenerate.toml"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let mut r = csv::Reader::from_path(out.path().join("riccati.v1.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap(),
        vec!["t", "re_psi", "im_psi", "psi_bar", "re_phi", "im_phi", "l", "u"]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 101);
    assert!(rows
        .iter()
        .all(|x| x[1].parse::<f64>().unwrap() == 0.0 && x[2].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn small_alpha_exits_2_citing_l2_loc() {
    let o = affvol(&[
        "riccati",
        &cfg("acceptance.toml"),
        "--set",
        "kernel.alpha=0.4",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("L2_loc"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        affvol(&["bogus", &cfg("acceptance.toml")]).status.code(),
        Some(2)
    );
    assert_eq!(
        affvol(&["riccati", &cfg("acceptance.toml"), "--frobnicate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        affvol(&["riccati", "/nonexistent/config.toml"])
            .status
            .code(),
        Some(2)
    );
    let o = affvol(&[
        "transform",
        &cfg("degenerate.toml"),
        "--set",
        "f.type=\"complex-const\"",
        "--set",
        "f.re=0.3",
        "--set",
        "f.im=0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let o = affvol(&[
        "resolvent",
        &cfg("acceptance.toml"),
        "--out",
        file.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn resolvent_csv_flags_the_atom() {
    let out = tempfile::tempdir().unwrap();
    let o = affvol(&[
        "resolvent",
        &cfg("degenerate.toml"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out.path().join("resolvent.v1.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,density,atom_flag"));
    assert_eq!(lines.next(), Some("0,1,1"));
    assert!(lines.all(|l| l.ends_with(",0,0")));
}

#[test]
fn outputs_are_byte_identical_across_worker_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, w) in [(&a, "1"), (&b, "3")] {
        let o = affvol(&[
            "transform",
            &cfg("acceptance.toml"),
            "--set",
            "mc.paths=3000",
            "--set",
            "grid.n=100",
            "--workers",
            w,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for name in [
        "transform_summary.v1.csv",
        "transform_flatness.v1.csv",
        "forward_mean.v1.csv",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn simulate_and_pastcheck_write_their_tables() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    let o = affvol(&[
        "simulate",
        &cfg("acceptance.toml"),
        "--set",
        "mc.paths=4",
        "--set",
        "grid.n=20",
        "--out",
        dir,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let paths = std::fs::read_to_string(out.path().join("paths.v1.csv")).unwrap();
    assert_eq!(paths.lines().count(), 1 + 4 * 21);
    let o = affvol(&[
        "pastcheck",
        &cfg("acceptance.toml"),
        "--set",
        "mc.past_paths=50",
        "--set",
        "grid.n=100",
        "--out",
        dir,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let past = std::fs::read_to_string(out.path().join("pastcheck.v1.csv")).unwrap();
    assert!(past.starts_with("t,re_v,im_v,v_bar,abs_exp_v,c_exp_v_bar\n"));
    assert_eq!(past.lines().count(), 1 + 50 * 3);
}

#[test]
fn verify_on_acceptance_config_passes() {
    let out = tempfile::tempdir().unwrap();
    let o = affvol(&[
        "verify",
        &cfg("acceptance.toml"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    let mut r = csv::Reader::from_path(out.path().join("verify_report.v1.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap(),
        vec!["claim", "status", "magnitude", "tolerance", "runtime_s"]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert!(rows.len() >= 25);
    assert!(rows.iter().all(|x| &x[1] == "pass"));
    assert!(out.path().join("verify.log").exists());
}

#[test]
fn verify_reports_property_failure_with_exit_1() {
    // An absurdly tight Monte Carlo slack and few paths make the transform claims fail.
    let out = tempfile::tempdir().unwrap();
    let o = affvol(&[
        "verify",
        &cfg("acceptance.toml"),
        "--set",
        "mc.paths=200",
        "--set",
        "tolerances.mc_slack=0",
        "--set",
        "tolerances.two_formula=1e-9",
        "--set",
        "grid.n=100",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
}
