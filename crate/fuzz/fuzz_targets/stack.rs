#![no_main]

use libfuzzer_sys::fuzz_target;
use untangle::formats::{decode_stack, encode_stack};

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = decode_stack(data) {
        let grid = f.header.grid().expect("decoded header has a valid grid");
        let again = encode_stack(&f.stack, &grid, f.header.level, f.header.seed);
        assert_eq!(decode_stack(&again).expect("re-encoded stack decodes"), f);
    }
});
