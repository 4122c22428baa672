#![no_main]

use libfuzzer_sys::fuzz_target;
use thbsgs::config::ConfigFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = ConfigFile::parse(text) {
        let printed = c.to_string();
        assert_eq!(ConfigFile::parse(&printed).expect("printed config parses"), c);
    }
});
