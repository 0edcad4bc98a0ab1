#![no_main]

use libfuzzer_sys::fuzz_target;
use trajlab::trace::{decode_logits, decode_resid, encode_logits, encode_resid};

// first three bytes pick the shape, the rest is the blob
fuzz_target!(|data: &[u8]| {
    let [t, l, d, rest @ ..] = data else { return };
    let (t, l, d) = (*t as usize % 8, *l as usize % 8, *d as usize % 16);
    if let Ok(c) = decode_resid(rest, t, l, d) {
        assert_eq!(encode_resid(&c), rest);
    }
    if let Ok(lg) = decode_logits(rest, t, d) {
        assert_eq!(encode_logits(&lg), rest);
    }
});
