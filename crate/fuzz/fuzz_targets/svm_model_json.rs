#![no_main]

use libfuzzer_sys::fuzz_target;
use s3a::classifier::SvmModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = SvmModel::from_json(text) {
        let _ = model.decision_value(&vec![0.5; model.feature_dim()]);
    }
});
