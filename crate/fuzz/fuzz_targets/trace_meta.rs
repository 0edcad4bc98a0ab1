#![no_main]

use libfuzzer_sys::fuzz_target;
use trajlab::trace::{decode_meta, encode_meta};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_meta(data) {
        let bytes = encode_meta(&m);
        assert_eq!(encode_meta(&decode_meta(&bytes).unwrap()), bytes);
    }
});
