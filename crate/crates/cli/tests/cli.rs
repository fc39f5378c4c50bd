use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
synth.n_queries = 200
synth.n_models = 4
synth.embed_dim = 8
synth.tie_fraction = 0.9
equirouter.hidden = 8
equirouter.model_dim = 4
train.epochs = 3
train.batch_size = 32
cost.hidden = 8
cost.epochs = 3
cost.batch_size = 32
grid_points = 10
";

fn equiroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equiroute"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn pipeline_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let runs: Vec<_> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for out in &runs {
        let o = equiroute(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "metrics.json",
        "curve.csv",
        "router.ckpt",
        "cost.ckpt",
        "noise.csv",
        "trainset_metrics.json",
    ] {
        assert_eq!(
            fs::read(runs[0].join(f)).unwrap(),
            fs::read(runs[1].join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn synth_then_train_and_sweep_from_table_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let gen = dir.path().join("gen");
    let o = equiroute(&["synth", "--config", &cfg, "--out", gen.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(gen.join("synth_summary.json")).unwrap()).unwrap();
    assert!(summary["tie_rate"].as_f64().unwrap() > 0.8);

    let table = gen.join("table");
    let run = dir.path().join("run");
    let args = |cmd: &'static str| {
        vec![
            cmd.to_string(),
            "--table".into(),
            table.to_string_lossy().into(),
            "--router".into(),
            "knn".into(),
            "--cost-source".into(),
            "oracle".into(),
            "--grid-points".into(),
            "7".into(),
            "--out".into(),
            run.to_string_lossy().into(),
        ]
    };
    for cmd in ["train", "sweep"] {
        let a = args(cmd);
        let o = equiroute(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let curve = fs::read_to_string(run.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 8);
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(run.join("metrics.json")).unwrap()).unwrap();
    for k in ["nauc", "peak_score", "qnc", "rci"] {
        assert!(metrics.get(k).is_some(), "{k}");
    }
}

#[test]
fn mse_flag_tags_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cost_source = oracle\n");
    let out = dir.path().join("o");
    let o = equiroute(&[
        "train",
        "--config",
        &cfg,
        "--router",
        "mse",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let bytes = fs::read(out.join("router.ckpt")).unwrap();
    assert_eq!(&bytes[..8], b"EQRCKPT1");
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + header_len]).unwrap();
    assert_eq!(header["kind"], "mse");
}

#[test]
fn oracle_sweep_reports_zero_rci() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("o");
    let o = equiroute(&[
        "sweep",
        "--config",
        &cfg,
        "--router",
        "oracle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["rci"], 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();

    let bad_key = write_config(dir.path(), "colour = blue\n");
    assert_eq!(code(&equiroute(&["sweep", "--config", &bad_key, "--out", out])), 1);
    assert_eq!(code(&equiroute(&["sweep", "--router", "graph"])), 1);
    assert_eq!(code(&equiroute(&["train", "--config", "/definitely/missing.cfg"])), 1);

    let cfg = write_config(dir.path(), "");
    assert_eq!(
        code(&equiroute(&["sweep", "--config", &cfg, "--out", out])),
        1,
        "missing checkpoint"
    );
    assert!(!Path::new(out).exists(), "validation failures write nothing");

    let gated = write_config(dir.path(), "router = oracle\nthreshold.min_nauc = 1.5\n");
    let o = equiroute(&["sweep", "--config", &gated, "--out", out]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nauc"));

    // Every training query tied on performance and cost: no ranking pairs.
    let table = dir.path().join("flat");
    fs::create_dir_all(&table).unwrap();
    fs::write(
        table.join("models.json"),
        r#"[{"id":0,"name":"a","unit_price":1.0},{"id":1,"name":"b","unit_price":1.0}]"#,
    )
    .unwrap();
    let queries: String = (0..12)
        .map(|n| format!("{{\"query_id\":\"q{n}\",\"embedding\":[{n}.0,1.0]}}\n"))
        .collect();
    fs::write(table.join("queries.jsonl"), queries).unwrap();
    fs::write(table.join("perf.csv"), "1,1\n".repeat(12)).unwrap();
    fs::write(table.join("cost.csv"), "2,2\n".repeat(12)).unwrap();
    let o = equiroute(&[
        "train",
        "--table",
        table.to_str().unwrap(),
        "--cost-source",
        "oracle",
        "--out",
        out,
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_exits_zero() {
    let o = equiroute(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("pipeline"));
}

#[test]
fn shipped_config_is_valid() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("desk");
    let o = equiroute(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("table/perf.csv").is_file());
}
