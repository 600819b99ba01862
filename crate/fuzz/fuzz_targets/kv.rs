#![no_main]

use libfuzzer_sys::fuzz_target;
use untangle::formats::parse_kv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = parse_kv(text) {
        for sec in &doc.sections {
            for (k, _) in &sec.entries {
                let _ = sec.floats(k);
                let _ = sec.triples(k);
            }
        }
    }
});
