#![no_main]

use libfuzzer_sys::fuzz_target;
use vega::pipeline::parse_pipeline;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = parse_pipeline(data) {
        let _ = cfg.snapshot();
    }
});
