//! Search-space documents: accepted spaces validate clean and survive a
//! serialize/parse round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use vega::space::{parse_space, serialize_space, validate_space};

fuzz_target!(|data: &str| {
    if let Ok(space) = parse_space(data) {
        assert!(validate_space(&space).is_empty());
        let back = parse_space(&serialize_space(&space)).expect("serialized space parses");
        assert_eq!(back, space);
    }
});
