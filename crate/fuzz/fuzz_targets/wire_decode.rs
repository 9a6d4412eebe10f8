#![no_main]

use libfuzzer_sys::fuzz_target;
use vega::dispatch::wire::Message;

fuzz_target!(|data: &str| {
    if let Ok(msg) = Message::decode(data) {
        let back = Message::decode(&msg.encode()).expect("encoded message decodes");
        assert_eq!(back, msg);
    }
});
