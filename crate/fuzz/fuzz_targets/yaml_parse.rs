//! YAML subset parser: no panics, and emitted documents parse back to the
//! same tree.

#![no_main]

use libfuzzer_sys::fuzz_target;
use vega::yaml;

fuzz_target!(|data: &str| {
    if let Ok(node) = yaml::parse(data) {
        let text = yaml::emit(&node);
        let back = yaml::parse(&text).expect("emitted YAML parses");
        assert_eq!(back, node, "{text}");
    }
});
