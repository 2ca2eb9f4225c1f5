#![no_main]

use libfuzzer_sys::fuzz_target;
use s3a::datakit::parse_manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_manifest(data) {
        let text = m.to_csv_string().unwrap();
        assert_eq!(parse_manifest(text.as_bytes()).unwrap(), m);
    }
});
