#![no_main]

use libfuzzer_sys::fuzz_target;
use trajlab::fixtures::{parse_controls, parse_layer_counts, parse_prompt_counts};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_prompt_counts(text);
    let _ = parse_layer_counts(text);
    let _ = parse_controls(text);
});
