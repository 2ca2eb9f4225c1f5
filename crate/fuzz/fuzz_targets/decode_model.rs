#![no_main]

use libfuzzer_sys::fuzz_target;
use s3a::autoencoder::{decode_model, encode_model};

fuzz_target!(|data: &[u8]| {
    if let Ok((header, params)) = decode_model(data) {
        // Re-encoding is canonical: a second pass reproduces the first.
        let again = encode_model(&header, &params).unwrap();
        let (h2, p2) = decode_model(&again).unwrap();
        assert_eq!(encode_model(&h2, &p2).unwrap(), again);
    }
});
