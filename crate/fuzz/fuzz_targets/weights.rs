#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = trajlab::model::decode_weights(data) {
        // anything that decodes re-encodes to a stable byte form
        let again = trajlab::model::encode_weights(&w).expect("decoded weights are valid");
        let w2 = trajlab::model::decode_weights(&again).unwrap();
        assert_eq!(trajlab::model::encode_weights(&w2).unwrap(), again);
    }
});
