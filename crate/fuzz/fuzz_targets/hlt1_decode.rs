#![no_main]

use libfuzzer_sys::fuzz_target;
use thbsgs::ckks::serial::Container;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Container::decode(data) {
        // Whatever decodes must re-encode to something that decodes the same.
        let bytes = c.encode();
        let again = Container::decode(&bytes).expect("re-encoded container decodes");
        assert_eq!(again.encode(), bytes);
    }
});
