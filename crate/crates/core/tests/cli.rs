use std::process::{Command, Output};

fn convred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convred"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(body.as_bytes());
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn theorem1_triangle_reports_equality() {
    let o = convred(&["theorem1", "--body", "builtin:simplex", "--dim", "2"]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    assert_eq!(
        rows[0],
        ["body", "n", "L_K", "V", "L_ball", "D_n", "ratio", "pass", "equality"]
    );
    let ratio: f64 = rows[1][6].parse().unwrap();
    assert!((ratio - 1.0).abs() < 1e-6);
    assert_eq!(rows[1][7], "true");
    assert_eq!(rows[1][8], "true");
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_convred"))
            .args([
                "theorem1",
                "--body",
                "builtin:cube",
                "--dim",
                "2",
                "--seed",
                "7",
            ])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("8"));
}

#[test]
fn csv_header_echoes_configuration() {
    let o = convred(&["dn", "--max", "3"]);
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("# config: {")));
    assert!(text.lines().any(|l| l == "# seed: 7"));
    assert_eq!(data_rows(&text).len(), 4);
}

#[test]
fn json_output_parses() {
    let o = convred(&[
        "volbound",
        "--body",
        "builtin:cube",
        "--dim",
        "2",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["command"], "volbound");
    assert_eq!(v["meta"]["passed"], true);
}

#[test]
fn file_bodies_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("quad.json");
    std::fs::write(
        &spec,
        r#"{"type":"vpolytope","dim":2,"vertices":[[0,0],[2,0],[1.5,1],[0,1.2]]}"#,
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let body = format!("vpolytope:{}", spec.display());
    let o = convred(&["theorem1", "--body", &body, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&std::fs::read_to_string(out).unwrap());
    let ratio: f64 = rows[1][6].parse().unwrap();
    assert!(ratio < 0.99);
}

#[test]
fn exit_codes() {
    assert_eq!(
        convred(&["theorem1", "--body", "builtin:nope"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        convred(&["theorem1", "--body", "builtin:cube", "--dim", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        convred(&["inclusion", "--p", "3", "--q", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(convred(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(convred(&["--help"]).status.code(), Some(0));
    assert_eq!(convred(&["lemma42", "--max", "20"]).status.code(), Some(0));
}

#[test]
fn covariogram_suite_expects_levelset_only_for_simplices() {
    for body in ["builtin:simplex", "builtin:cube"] {
        let o = convred(&[
            "covariogram",
            "--body",
            body,
            "--dim",
            "2",
            "--trials",
            "200",
        ]);
        assert!(
            o.status.success(),
            "{body}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn gmono_and_inclusion_pass() {
    assert!(convred(&["gmono", "--trials", "50", "--alpha", "0.25"])
        .status
        .success());
    assert!(convred(&[
        "inclusion",
        "--body",
        "builtin:ball",
        "--dim",
        "2",
        "--p",
        "2",
        "--q",
        "4"
    ])
    .status
    .success());
}
