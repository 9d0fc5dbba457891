use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tessera(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tessera")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = tessera(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_ingest_query_and_fail_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let store = dir.path().join("store");
    ok(&["gen-scenes", "--count", "8", "--size", "8", "--bands", "5", "--side", "2", "--out", s(&scenes)]);
    let ingested = ok(&["ingest", s(&scenes), "--store", s(&store), "--nodes", "4"]);
    assert_eq!(ingested.lines().count(), 8);

    // duplicate ingest is a validation error
    assert_eq!(tessera(&["ingest", s(&scenes.join("scene-00000")), "--store", s(&store)]).status.code(), Some(2));

    let pgm = dir.path().join("heat.pgm");
    let query = |extra: &[&str]| {
        let mut args = vec![
            "query", "--store", s(&store), "--min-lon", "116.0", "--max-lon", "116.2", "--min-lat", "39.0",
            "--max-lat", "39.2", "--start", "0", "--end", "1577836800", "--info", "NDVI", "--out", s(&pgm),
        ];
        args.extend_from_slice(extra);
        tessera(&args)
    };
    let out = query(&["--verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["tile_count"], 4);
    let healthy = std::fs::read(&pgm).unwrap();
    assert!(healthy.starts_with(b"P5\n16 16\n255\n"));

    ok(&["node", "fail", "0", "--store", s(&store)]);
    assert!(query(&[]).status.success());
    assert_eq!(std::fs::read(&pgm).unwrap(), healthy);
    assert_eq!(tessera(&["node", "fail", "7", "--store", s(&store)]).status.code(), Some(2));
    for n in ["1", "2", "3"] {
        ok(&["node", "fail", n, "--store", s(&store)]);
    }
    assert_eq!(query(&[]).status.code(), Some(3));
    let nodes: Value = serde_json::from_str(&ok(&["node", "restore", "2", "--store", s(&store)])).unwrap();
    assert_eq!(nodes[2]["alive"], true);
    // every tile has a replica on node 2 or node 3
    ok(&["node", "restore", "3", "--store", s(&store)]);
    assert!(query(&[]).status.success());
    assert_eq!(std::fs::read(&pgm).unwrap(), healthy);
}

#[test]
fn exit_codes_for_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let args = |store: &str| -> Vec<String> {
        [
            "query", "--store", store, "--min-lon", "-3.5", "--max-lon", "-4.0", "--min-lat", "0", "--max-lat", "1",
            "--start", "0", "--end", "1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let run = |a: Vec<String>| Command::new(env!("CARGO_BIN_EXE_tessera")).args(a).output().unwrap();
    // inverted longitudes are rejected before the store is opened
    assert_eq!(run(args(s(&missing))).status.code(), Some(2));
    let mut good = args(s(&missing));
    good[6] = "-3.0".into();
    assert_eq!(run(good).status.code(), Some(3));
    assert_eq!(tessera(&["query"]).status.code(), Some(2));
    assert_eq!(tessera(&["bench", "scaling", "--counts", "5..1"]).status.code(), Some(2));
}

#[test]
fn bench_reports_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("scaling.json");
    let text = ok(&["bench", "scaling", "--counts", "5..15", "--repeat", "2", "--tiles", "200", "--json", s(&json)]);
    assert!(text.contains("R²"));
    let report: Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(report["repeat"], 2);
    assert_eq!(report["elapsed"]["multi"].as_array().unwrap().len(), 3);

    let json = dir.path().join("overhead.json");
    ok(&["bench", "overhead", "--tiles", "100", "--repeat", "2", "--json", s(&json)]);
    let report: Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(report["build"]["multi"]["samples"], 2);
    assert!(report["sizes_bytes"]["multi"].as_u64().unwrap() > 0);
}
