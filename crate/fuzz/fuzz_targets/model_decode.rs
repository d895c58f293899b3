#![no_main]

use libfuzzer_sys::fuzz_target;
use robustnet::mlp::MlpParams;

fuzz_target!(|data: &[u8]| {
    // Anything that decodes must re-encode to the same bytes.
    if let Ok(params) = MlpParams::from_bytes(data) {
        assert_eq!(params.to_bytes(), data);
        assert_eq!(params.as_slice().len(), params.shape().param_count());
    }
});
