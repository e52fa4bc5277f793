use std::process::Command;

fn qtrsp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qtrsp"))
}

#[test]
fn resolution_table_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res.csv");
    let status = qtrsp()
        .args([
            "--experiment",
            "resolution_table",
            "--m",
            "8,16,24",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let row16 = text.lines().find(|l| l.starts_with("16,")).unwrap();
    assert!(row16.contains("0.00390625"), "{row16}");
    assert!(row16.contains("0.0000479368996"), "{row16}");
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str| {
        let path = dir.path().join(name);
        let status = qtrsp()
            .args([
                "--experiment",
                "truncation_sweep",
                "--m",
                "8",
                "--n",
                "0..4",
            ])
            .args([
                "--trials", "20000", "--seed", "42", "--format", "json", "--out",
            ])
            .arg(&path)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(path).unwrap()
    };
    assert_eq!(go("a.json"), go("b.json"));
}

#[test]
fn default_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = qtrsp()
        .env("QTRSP_OUT_DIR", dir.path())
        .args(["--experiment", "ledger_report", "--seed", "7"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.path().join("ledger_report_seed7.csv")).unwrap();
    assert!(
        text.starts_with("protocol,c,m,n,hidden_cost,epr_pairs,verified_bits\n"),
        "{text}"
    );
    assert!(text.contains("QT,2,16,0,14,1,16"));
    assert!(text.contains("RSP,1,16,0,15,1,16"));
}

#[test]
fn invalid_configuration_lists_every_problem() {
    let out = qtrsp()
        .args([
            "--experiment",
            "teleport_identity",
            "--m",
            "3",
            "--mode",
            "general",
            "--n",
            "20",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("even m"), "{err}");
    assert!(err.contains("n = 20"), "{err}");
}

#[test]
fn help_lists_operation_chains() {
    let out = qtrsp().arg("--help").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["teleport_identity", "truncation_sweep", "resolution_table"] {
        assert!(text.contains(name), "{text}");
    }
}
