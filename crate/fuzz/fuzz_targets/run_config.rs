#![no_main]

use libfuzzer_sys::fuzz_target;
use trajlab_cli::config::{parse_list, parse_windows, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::from_json(text) {
        let _ = c.validate();
    }
    let _ = parse_list(text);
    let _ = parse_windows(text);
});
