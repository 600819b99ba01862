#![no_main]

use libfuzzer_sys::fuzz_target;
use untangle::formats::{decode_truth, encode_truth};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = decode_truth(text) {
        assert_eq!(decode_truth(&encode_truth(&t)).expect("re-encoded truth decodes"), t);
    }
});
