#![no_main]

use libfuzzer_sys::fuzz_target;
use s3a::protocol::{render_report, EvalReport};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = EvalReport::from_json(text) {
        let _ = render_report(&report);
        let json = report.to_json().unwrap();
        assert_eq!(EvalReport::from_json(&json).unwrap().to_json().unwrap(), json);
    }
});
