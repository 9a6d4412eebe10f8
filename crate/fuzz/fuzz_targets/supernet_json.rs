#![no_main]

use libfuzzer_sys::fuzz_target;
use vega::netdesc::{select_from_supernet, SupernetDescription};

fuzz_target!(|data: &str| {
    if let Ok(sup) = serde_json::from_str::<SupernetDescription>(data) {
        let _ = select_from_supernet(&sup);
    }
});
