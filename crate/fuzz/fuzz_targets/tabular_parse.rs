#![no_main]

use libfuzzer_sys::fuzz_target;
use vega::dispatch::TabularTable;

fuzz_target!(|data: &str| {
    let _ = TabularTable::parse(data);
});
