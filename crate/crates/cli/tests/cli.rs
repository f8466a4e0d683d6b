use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

const SMALL_CONFIG: &str = r#"
seed = 5
agreement_boost = 0.3

[[datasets]]
id = "nq"
reasoning_type = "factual"
n_train = 40
n_dev = 20
n_test = 30
accuracy = [0.43, 0.35, 0.21, 0.33]

[[datasets]]
id = "gsm8k"
reasoning_type = "math"
n_train = 40
n_dev = 20
n_test = 30
accuracy = [0.12, 0.38, 0.62, 0.42]
"#;

fn selqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selqa")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = selqa(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    selqa(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct World {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl World {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("sim.toml"), SMALL_CONFIG).unwrap();
        ok(&["simulate", "--config", s(&root.join("sim.toml")), "--out", s(&root.join("bench"))]);
        for mode in ["full", "no_agreement", "question_only"] {
            let model = root.join(format!("{mode}.bin"));
            ok(&["train", "--bench", s(&root.join("bench")), "--mode", mode, "--seed", "1", "--trees", "20", "--out", s(&model)]);
        }
        World { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_runs_and_is_reproducible() {
    let w = World::new();
    let bench = w.p("bench");
    assert!(w.p("bench/manifest.json").is_file());
    assert!(w.p("full.bin.manifest.json").is_file());
    let m = json(&w.p("full.bin.manifest.json"));
    assert_eq!(m["feature_mode"], "full");
    assert_eq!(m["seeds"][0], 1);

    let table = ok(&["eval-gen", "--bench", s(&bench), "--model", s(&w.p("full.bin")), "--out", s(&w.p("gen"))]);
    assert!(table.contains("oracle") && table.contains("macro"));
    let reports = json(&w.p("gen/eval_gen.json"));
    let arr = reports.as_array().unwrap();
    let macro_of = |name: &str| arr.iter().find(|r| r["strategy"] == name).unwrap()["macro_average"].as_f64().unwrap();
    for r in arr {
        assert!(macro_of("oracle") >= r["macro_average"].as_f64().unwrap());
        let per: Vec<f64> = r["per_dataset_em"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(per.len(), 2);
        assert!((per.iter().sum::<f64>() / 2.0 - r["macro_average"].as_f64().unwrap()).abs() < 1e-12);
    }
    for e in ["factual", "multihop", "math", "commonsense"] {
        macro_of(&format!("single:{e}"));
    }

    ok(&["eval-gen", "--bench", s(&bench), "--model", s(&w.p("full.bin")), "--out", s(&w.p("gen2"))]);
    assert_eq!(std::fs::read(w.p("gen/eval_gen.json")).unwrap(), std::fs::read(w.p("gen2/eval_gen.json")).unwrap());

    let table = ok(&[
        "eval-selective",
        "--bench",
        s(&bench),
        "--model",
        s(&w.p("full.bin")),
        "--no-agreement-model",
        s(&w.p("no_agreement.bin")),
        "--out",
        s(&w.p("sel")),
    ]);
    assert!(table.contains("mope_full") && table.contains("Cov@80"));
    let sel = json(&w.p("sel/selective.json"));
    assert_eq!(sel.as_array().unwrap().len(), 3);
    for r in sel.as_array().unwrap() {
        for k in ["auc", "cov_at_80", "cov_at_90", "er", "gamma", "n", "per_dataset"] {
            assert!(r.get(k).is_some(), "{k}");
        }
        assert_eq!(r["n"], 60);
    }
    let csv = std::fs::read_to_string(w.p("sel/risk_coverage.csv")).unwrap();
    assert!(csv.starts_with("scorer,dataset,coverage,risk\n"));
    let manifest = json(&w.p("sel/manifest.json"));
    assert_eq!(manifest["command"], "eval-selective");
    assert!(manifest["inputs"].as_array().unwrap().iter().all(|i| i["sha256"].as_str().unwrap().len() == 64));

    ok(&["eval-selective", "--bench", s(&bench), "--model", s(&w.p("full.bin")), "--scorers", "maxprob,mope_full", "--gamma-scope", "per-dataset", "--out", s(&w.p("sel2"))]);
    let sel2 = json(&w.p("sel2/selective.json"));
    assert!(sel2[0]["gamma"].is_null());
}

#[test]
fn simulate_and_train_are_byte_deterministic() {
    let a = World::new();
    let b = World::new();
    for f in ["bench/0000_nq.jsonl", "bench/0001_gsm8k.jsonl", "full.bin", "question_only.bin"] {
        assert_eq!(std::fs::read(a.p(f)).unwrap(), std::fs::read(b.p(f)).unwrap(), "{f}");
    }
}

#[test]
fn route_writes_records() {
    let w = World::new();
    let out = w.p("routed.jsonl");
    ok(&["route", "--bench", s(&w.p("bench")), "--model", s(&w.p("full.bin")), "--strategy", "mope", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 60);
    let first = text.lines().next().unwrap();
    let at: Vec<usize> = ["question_id", "strategy", "chosen_expert", "answer", "score", "all_scores", "correct"]
        .iter()
        .map(|k| first.find(&format!("\"{k}\":")).unwrap())
        .collect();
    assert!(at.windows(2).all(|w| w[0] < w[1]), "{first}");
    assert_eq!(rows[0]["all_scores"].as_object().unwrap().len(), 4);
    assert!(rows.iter().all(|r| r["correct"] == 0 || r["correct"] == 1));

    ok(&["route", "--bench", s(&w.p("bench")), "--strategy", "random:4", "--split", "dev", "--out", s(&w.p("r.jsonl"))]);
    assert_eq!(std::fs::read_to_string(w.p("r.jsonl")).unwrap().lines().count(), 40);
}

#[test]
fn per_dataset_routers() {
    let w = World::new();
    ok(&["train", "--bench", s(&w.p("bench")), "--trees", "10", "--per-dataset-router", "--out", s(&w.p("per"))]);
    assert!(w.p("per/nq.bin").is_file() && w.p("per/gsm8k.bin").is_file());
    ok(&["eval-gen", "--bench", s(&w.p("bench")), "--model", s(&w.p("per")), "--strategies", "mope,oracle", "--out", s(&w.p("g"))]);
    assert_eq!(json(&w.p("g/eval_gen.json")).as_array().unwrap().len(), 2);
}

#[test]
fn validation_errors_exit_with_two() {
    let w = World::new();
    let bench = w.p("bench");
    assert_eq!(code(&["eval-gen", "--bench", "/nonexistent", "--out", s(&w.p("x"))]), 2);
    assert_eq!(code(&["eval-gen", "--bench", s(&bench), "--strategies", "mope", "--out", s(&w.p("x"))]), 2);
    assert!(!w.p("x").exists(), "no partial output on validation errors");
    assert_eq!(code(&["eval-gen", "--bench", s(&bench), "--strategies", "gpt", "--out", s(&w.p("x"))]), 2);
    assert_eq!(code(&["route", "--bench", s(&bench), "--strategy", "bogus", "--out", s(&w.p("r"))]), 2);
    assert_eq!(code(&["eval-selective", "--bench", s(&bench), "--model", s(&w.p("no_agreement.bin")), "--scorers", "mope_full", "--out", s(&w.p("x"))]), 2);
    assert_eq!(code(&["eval-selective", "--bench", s(&bench), "--model", s(&w.p("full.bin")), "--out", s(&w.p("x"))]), 2);

    let mut bytes = std::fs::read(w.p("full.bin")).unwrap();
    let n = bytes.len();
    bytes[n - 10] ^= 1;
    std::fs::write(w.p("bad.bin"), &bytes).unwrap();
    assert_eq!(code(&["route", "--bench", s(&bench), "--model", s(&w.p("bad.bin")), "--strategy", "mope", "--out", s(&w.p("r"))]), 2);

    std::fs::write(w.p("bad.toml"), "agreement_boost = 3.0\n").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&w.p("bad.toml")), "--out", s(&w.p("b2"))]), 2);
    std::fs::create_dir_all(w.p("broken")).unwrap();
    std::fs::write(w.p("broken/0000_x.jsonl"), "{not json}\n").unwrap();
    let out = selqa(&["eval-gen", "--bench", s(&w.p("broken")), "--strategies", "oracle", "--out", s(&w.p("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0000_x.jsonl:1"));
    assert_eq!(code(&["train", "--bench", s(&bench), "--mode", "everything", "--out", s(&w.p("m"))]), 2);
}

fn http(port: u16, method: &str, path: &str, body: &str) -> (u16, Value) {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    let status = resp[9..12].parse().unwrap();
    let body = resp.split("\r\n\r\n").nth(1).unwrap_or("");
    (status, serde_json::from_str(body).unwrap_or(Value::Null))
}

#[test]
fn serve_answers_http() {
    let w = World::new();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_selqa"))
        .args(["serve", "--bench", s(&w.p("bench")), "--model", s(&w.p("full.bin")), "--port", &port.to_string(), "--store", s(&w.p("store"))])
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(start.elapsed() < Duration::from_secs(20), "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    let (status, v) = http(port, "POST", "/sessions", r#"{"condition":"mope","seed":1}"#);
    assert_eq!(status, 201);
    let id = v["session_id"].as_str().unwrap().to_string();
    let (status, v) = http(port, "GET", &format!("/sessions/{id}/next"), "");
    assert_eq!(status, 200);
    assert_eq!(v["trial"]["expert_panel"].as_array().unwrap().len(), 4);
    assert!(v["trial"].get("correct").is_none());
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(w.p("store").join(&id).join("session.json").is_file());
}
