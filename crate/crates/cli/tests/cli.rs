use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn thbsgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thbsgs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn demo_th_bsgs_passes() {
    let o = thbsgs(&[
        "demo", "--params", "toy", "--method", "th-bsgs", "--n", "64", "--factors", "4,4,4", "--seed", "7",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("NOT FOR PRODUCTION CRYPTOGRAPHY"));
    let v = json(&o);
    assert_eq!(v["passed"], true);
    let run = &v["runs"][0];
    assert!(run["max_error"].as_f64().unwrap() < 1e-3);
    assert_eq!(run["trace"]["decompose"], 7);
    assert_eq!(run["trace"]["moddown"], 8);
    assert_eq!(run["trace"]["distinct_keys"], 9);
}

#[test]
fn demo_all_compare() {
    let o = thbsgs(&["demo", "--method", "all", "--compare", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["runs"].as_array().unwrap().len(), 4);
    assert_eq!(v["pairwise"].as_array().unwrap().len(), 6);
    assert!(v["max_pairwise"].as_f64().unwrap() < 1e-4);
}

#[test]
fn demo_identity_is_tight() {
    let o = thbsgs(&["demo", "--method", "all", "--identity", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    for r in json(&o)["runs"].as_array().unwrap() {
        assert!(r["max_error"].as_f64().unwrap() < 1e-5, "{r}");
    }
}

#[test]
fn tolerance_breach_exits_2() {
    let o = thbsgs(&["demo", "--seed", "1", "--tolerance", "1e-14"]);
    assert_eq!(code(&o), 2);
    assert_eq!(json(&o)["passed"], false);
}

#[test]
fn usage_and_config_errors_exit_1() {
    assert_eq!(code(&thbsgs(&["demo", "--bogus"])), 1);
    assert_eq!(code(&thbsgs(&["demo", "--params", "set-z"])), 1);
    assert_eq!(code(&thbsgs(&["demo", "--factors", "4,4"])), 1);
    assert_eq!(code(&thbsgs(&["simulate", "--parallelism", "1,1,1"])), 1);
    assert_eq!(code(&thbsgs(&["simulate", "--method", "bsgs"])), 1);
    let big = thbsgs(&["demo", "--params", "set-c"]);
    assert_eq!(code(&big), 1);
    assert!(stderr(&big).contains("--allow-large"));
    assert_eq!(code(&thbsgs(&["--help"])), 0);
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let p = path.to_str().unwrap();
        let o = thbsgs(&["demo", "--method", "all", "--seed", "9", "--format", "csv", "--out", p]);
        assert_eq!(code(&o), 0);
        assert!(o.stdout.is_empty());
        std::fs::read(&path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
    let other = thbsgs(&["demo", "--method", "all", "--seed", "10", "--format", "csv"]);
    assert_ne!(other.stdout, run("c.csv"));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn config_file_sections_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.conf",
        "# shared\nseed = 5\nformat = csv\n\n[demo]\nmethod = dh-bsgs\nfactors = 8,8\n\n[simulate]\nparams = set-b\n",
    );
    let o = thbsgs(&["demo", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("dh-bsgs(8x8)"), "{text}");
    let o = thbsgs(&["demo", "--config", &cfg, "--format", "json"]);
    assert_eq!(json(&o)["seed"], 5);
    let o = thbsgs(&["simulate", "--config", &cfg]);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("phase,ntt,"));

    let bad = write(dir.path(), "bad.conf", "seed = 1\n[demo\n");
    let o = thbsgs(&["demo", "--config", &bad]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let typo = write(dir.path(), "typo.conf", "sed = 1\n");
    assert_eq!(code(&thbsgs(&["demo", "--config", &typo])), 1);
}

#[test]
fn analyze_frontier() {
    let o = thbsgs(&["analyze", "--params", "set-c", "--method", "all", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,factors,decompose,moddown,key_limbs,key_bytes,modmuls,min_memory,best_tradeoff"
    );
    assert!(text.contains("dh-bsgs,512x64,64,65,75768,"));
    assert!(text.contains("th-bsgs,16x128x16,31,32,20724,"));
    assert!(text.contains("th-bsgs,32x32x32,63,64,12276,"));
    assert!(text.trim_end().ends_with("# dh_th_key_ratio,3.6561"));
    let v = json(&thbsgs(&["analyze", "--params", "set-c", "--method", "all"]));
    let r = v["dh_th_key_ratio"].as_f64().unwrap();
    assert!((r - 3.656).abs() < 1e-3);
}

#[test]
fn simulate_count_only_and_compute() {
    let o = thbsgs(&["simulate", "--params", "set-c"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["mode"], "count_only");
    assert_eq!(v["phases"][0]["switching_key"], 3960);
    let dir = tempfile::tempdir().unwrap();
    let ct = dir.path().join("out.hlt");
    let o = thbsgs(&["simulate", "--compute", "--seed", "2", "--emit-ciphertext", ct.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["bit_exact_with_reference"], true);
    assert_eq!(v["trace"]["decompose"], 7);
    let o = thbsgs(&["inspect", ct.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let h = json(&o);
    assert_eq!(h["kind"], "ciphertext");
    assert_eq!(h["level"], 3);
    std::fs::write(&ct, b"HLT1junk").unwrap();
    assert_eq!(code(&thbsgs(&["inspect", ct.to_str().unwrap()])), 1);
}

#[test]
fn budget_search_feeds_simulation() {
    let o = thbsgs(&["simulate", "--params", "set-a", "--budget-bytes", "4e6"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    let limb_bytes = 8192.0 * 54.0 / 8.0;
    for ph in v["phases"].as_array().unwrap() {
        assert!(ph["peak_onchip"].as_f64().unwrap() * limb_bytes <= 4e6);
    }
    assert_eq!(code(&thbsgs(&["simulate", "--params", "set-a", "--budget-bytes", "1000"])), 1);
}

#[test]
fn validate_exit_codes() {
    for set in ["set-a", "set-b", "set-c"] {
        let o = thbsgs(&["validate", "--params", set]);
        assert_eq!(code(&o), 0, "{set}");
        let v = json(&o);
        assert_eq!(v["passed"], true);
        for c in v["cells"].as_array().unwrap() {
            if c["delta"] != 0 {
                assert_eq!(c["whitelisted"], true);
                assert!(c["reason"].is_string());
            }
        }
        assert_eq!(code(&thbsgs(&["validate", "--params", set, "--strict"])), 2);
    }
    let o = thbsgs(&[
        "validate", "--params", "set-a", "--model-parallelism", "7,7,31,1,103,8,5,10,1,1,5",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn inspect_lists_sets() {
    let o = thbsgs(&["inspect", "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("set-c,65536,32,12,3,54,32768,16x128x16,"));
}
