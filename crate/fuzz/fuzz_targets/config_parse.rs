#![no_main]

use libfuzzer_sys::fuzz_target;
use robustnet::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let _ = cfg.validate();
        let _ = cfg.with_overrides(&["seed=3".to_string(), "train.lr=0.5".to_string()]);
        let back = ExperimentConfig::from_json(&cfg.to_json()).expect("echo must parse");
        assert_eq!(back, cfg);
    }
});
