//! Model descriptions: JSON decoding, validation and cost estimation never
//! panic, and accepted documents round-trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use vega::netdesc::{estimate_cost, ModelDescription};

fuzz_target!(|data: &str| {
    if let Ok(desc) = ModelDescription::from_json_str(data) {
        let back = ModelDescription::from_json_str(&desc.to_json_string()).expect("serialized description parses");
        assert_eq!(back, desc);
        let _ = estimate_cost(&desc);
    }
});
