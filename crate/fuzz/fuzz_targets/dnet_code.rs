#![no_main]

use libfuzzer_sys::fuzz_target;
use vega::netdesc::dnet::DnetBlockSpec;

fuzz_target!(|data: &str| {
    if let Ok(spec) = DnetBlockSpec::parse(data) {
        assert_eq!(DnetBlockSpec::parse(&spec.code()).as_ref(), Ok(&spec));
    }
});
