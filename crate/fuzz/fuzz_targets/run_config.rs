#![no_main]

use libfuzzer_sys::fuzz_target;
use nmt_coverage::cli::ConfigFile;
use nmt_coverage::train::TrainConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = TrainConfig::from_json(text) {
        let json = serde_json::to_string(&cfg).expect("config serializes");
        assert_eq!(TrainConfig::from_json(&json).expect("round trip"), cfg);
    }
    let _ = serde_json::from_str::<ConfigFile>(text);
});
