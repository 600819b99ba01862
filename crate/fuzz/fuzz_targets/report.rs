#![no_main]

use libfuzzer_sys::fuzz_target;
use untangle::formats::{decode_report, encode_report};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = decode_report(text) {
        let once = encode_report(&r);
        let back = decode_report(&once).expect("re-encoded report decodes");
        assert_eq!(encode_report(&back), once);
    }
});
