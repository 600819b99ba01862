#![no_main]

use libfuzzer_sys::fuzz_target;
use untangle_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::from_kv(text) {
        let _ = c.validate();
    }
});
