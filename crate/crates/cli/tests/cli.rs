use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn pack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pack"))
        .args(args)
        .env("PACK_THREADS", "2")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pack(args);
    assert!(
        out.status.success(),
        "pack {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) {
    ok(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--episodes",
        "2",
        "--demos",
        "40",
        "--seed",
        "5",
    ]);
}

#[test]
fn synth_then_bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_owned();
    let (manifest, episodes, demos) = (d("manifest.json"), d("episodes.jsonl"), d("demos.jsonl"));
    let run = |out: &str, container: &[&str]| {
        let out = d(out);
        let mut args = vec![
            "bench",
            "--manifest",
            &manifest,
            "--episodes",
            &episodes,
            "--demos",
            &demos,
            "--methods",
            "blbf-so2,beam3+policy",
            "--seeds",
            "0,1",
            "--out",
            &out,
        ];
        args.extend(container);
        ok(&args)
    };
    let stdout = run("a", &["--cell", "0.004"]);
    assert!(stdout.contains("blbf-so2") && stdout.contains("reference"));
    std::fs::write(
        dir.path().join("bench.toml"),
        "[container]\ncell_size = 0.004\n",
    )
    .unwrap();
    run("b", &["--config", &d("bench.toml")]);
    for f in [
        "plots/final_compactness.png",
        "plots/step_compactness.png",
        "plots/step_stability.png",
        "traces/blbf-so2.jsonl",
    ] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
    let untimed = |run: &str| -> Vec<String> {
        let text = std::fs::read_to_string(dir.path().join(run).join("report.csv")).unwrap();
        text.lines()
            .map(|l| l.split(',').take(17).collect::<Vec<_>>().join(","))
            .collect()
    };
    let a = untimed("a");
    assert_eq!(a, untimed("b"));
    assert_eq!(
        a.iter().filter(|l| l.starts_with("episode,")).count(),
        2 * 2 * 2
    );
}

#[test]
fn bench_without_demos_rejects_sequence_methods() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_owned();
    let out = pack(&[
        "bench",
        "--manifest",
        &d("manifest.json"),
        "--episodes",
        &d("episodes.jsonl"),
        "--methods",
        "beam3+policy",
        "--out",
        &d("out"),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs demonstrations"));
}

#[test]
fn plan_follows_demonstrations() {
    let dir = tempfile::tempdir().unwrap();
    let demos = dir.path().join("demos.jsonl");
    std::fs::write(
        &demos,
        "[\"box\",\"can\",\"fruit\"]\n[\"box\",\"can\",\"fruit\"]\n[\"box\",\"fruit\"]\n",
    )
    .unwrap();
    let matrix = dir.path().join("matrix.json");
    let text = ok(&[
        "plan",
        "--demos",
        demos.to_str().unwrap(),
        "--objects",
        "f=fruit,c=can,b=box",
        "--matrix-out",
        matrix.to_str().unwrap(),
    ]);
    let plan: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(plan["order"], serde_json::json!(["b", "c", "f"]));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(matrix).unwrap()).unwrap();
    assert_eq!(m["categories"].as_array().unwrap().len(), 3);
    let out = pack(&[
        "plan",
        "--demos",
        demos.to_str().unwrap(),
        "--objects",
        "bare",
    ]);
    assert!(!out.status.success());
}

#[test]
fn place_into_saved_heightmap() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let nx = 200;
    let rows: Vec<String> = (0..nx)
        .map(|i| vec![if i < 100 { "0.1" } else { "0" }; 150].join(","))
        .collect();
    let state = dir.path().join("state.csv");
    std::fs::write(&state, rows.join("\n")).unwrap();
    let after = dir.path().join("after.csv");
    let text = ok(&[
        "place",
        "--state",
        state.to_str().unwrap(),
        "--object",
        "tea_box_1",
        "--manifest",
        dir.path().join("manifest.json").to_str().unwrap(),
        "--out",
        after.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["status"], "placed");
    assert_eq!(v["pose"]["z"], 0.0);
    assert!(v["pose"]["x"].as_f64().unwrap() >= 0.2);
    assert_eq!(std::fs::read_to_string(after).unwrap().lines().count(), nx);
}

#[test]
fn serve_over_stdio() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_pack"))
        .args([
            "serve",
            "--manifest",
            dir.path().join("manifest.json").to_str().unwrap(),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let mut ask = |req: &str| -> Value {
        writeln!(stdin, "{req}").unwrap();
        serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap()
    };
    let r = ask(r#"{"cmd":"reset","episode":["apple_0","sponge_1"],"seed":1}"#);
    assert_eq!(r["shape"], serde_json::json!([224, 224]));
    let r = ask(r#"{"cmd":"step","action":[0.0,0.0,0.25]}"#);
    assert_eq!(r["info"]["outcome"], "placed");
    assert!(ask(r#"{"cmd":"warp"}"#).get("error").is_some());
    let r = ask(r#"{"cmd":"step","action":[-1.0,-1.0,0.0]}"#);
    assert_eq!(
        (r["info"]["outcome"].as_str(), r["terminated"].as_bool()),
        (Some("out_of_bounds"), Some(true))
    );
    assert_eq!(ask(r#"{"cmd":"close"}"#)["closed"], true);
    assert!(child.wait().unwrap().success());
}

#[test]
fn serve_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_pack"))
        .args([
            "serve",
            "--tcp",
            "127.0.0.1:0",
            "--manifest",
            dir.path().join("manifest.json").to_str().unwrap(),
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut banner)
        .unwrap();
    let addr = banner
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_owned();
    let stream = std::net::TcpStream::connect(&addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut ask = |req: &str| -> Value {
        writeln!(&stream, "{req}").unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap()
    };
    assert!(ask(r#"{"cmd":"reset","episode":["orange_0"]}"#)
        .get("obs")
        .is_some());
    let r = ask(r#"{"cmd":"step","action":[0.1,0.1,0.0]}"#);
    assert_eq!(r["terminated"], true);
    assert_eq!(r["info"]["termination"], "all_placed");
    child.kill().unwrap();
    child.wait().unwrap();
}
