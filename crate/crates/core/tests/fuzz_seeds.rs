//! Replays the checked-in fuzz corpus through the fuzz-target invariants.

use std::path::PathBuf;

use thbsgs::ckks::serial::Container;
use thbsgs::config::{parse_usize_list, ConfigFile};
use thbsgs::costmodel::ParallelismConfig;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn hlt1_seeds() {
    for (name, data) in seeds("hlt1_decode") {
        let decoded = Container::decode(&data);
        let should_decode = ["seed-ciphertext", "seed-plaintext", "seed-swk"].contains(&name.as_str());
        assert_eq!(decoded.is_ok(), should_decode, "{name}: {decoded:?}");
        if let Ok(c) = decoded {
            let bytes = c.encode();
            assert_eq!(bytes, data, "{name}");
            assert_eq!(Container::decode(&bytes).unwrap().encode(), bytes);
        }
    }
}

#[test]
fn config_seeds() {
    for (name, data) in seeds("config_parse") {
        let text = String::from_utf8(data).unwrap();
        match ConfigFile::parse(&text) {
            Ok(c) => assert_eq!(ConfigFile::parse(&c.to_string()).unwrap(), c, "{name}"),
            Err(e) => assert!(
                ["seed-bad-header", "seed-dup"].contains(&name.as_str()),
                "{name}: {e}"
            ),
        }
    }
}

#[test]
fn flag_list_seeds() {
    let mut accepted = Vec::new();
    for (name, data) in seeds("flag_lists") {
        let text = String::from_utf8(data).unwrap();
        if let Ok(v) = parse_usize_list(&text) {
            let joined = v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
            assert_eq!(parse_usize_list(&joined).unwrap(), v);
            accepted.push(name.clone());
        }
        if let Ok(c) = ParallelismConfig::parse_list(&text) {
            let again = ParallelismConfig::parse_list(&c.to_string()).unwrap();
            assert_eq!((again.m, again.l), (c.m, c.l));
        }
    }
    assert_eq!(accepted, ["seed-factors", "seed-parallelism", "seed-spaces"]);
}
