#![no_main]

use libfuzzer_sys::fuzz_target;
use s3a::datakit::{decode_features, encode_features};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_features(data) {
        // Anything accepted must re-encode to the same bytes.
        assert_eq!(encode_features(&m).unwrap(), data);
    }
});
