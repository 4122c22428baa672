#![no_main]

use libfuzzer_sys::fuzz_target;
use thbsgs::config::parse_usize_list;
use thbsgs::costmodel::ParallelismConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_usize_list(text) {
        assert!(v.iter().all(|&x| x > 0));
        let joined = v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        assert_eq!(parse_usize_list(&joined).unwrap(), v);
    }
    if let Ok(c) = ParallelismConfig::parse_list(text) {
        let again = ParallelismConfig::parse_list(&c.to_string()).unwrap();
        assert_eq!((again.m, again.l), (c.m, c.l));
    }
});
