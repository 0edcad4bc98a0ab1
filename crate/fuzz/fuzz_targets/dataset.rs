#![no_main]

use libfuzzer_sys::fuzz_target;
use trajlab::vocab::Vocab;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(specs) = trajlab::dataset::parse_dataset(text) {
        for s in &specs {
            let _ = s.token_ids(&Vocab::ByteLevel);
            let _ = s.classify(&s.text);
        }
    }
});
