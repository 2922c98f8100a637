#![no_main]

use libfuzzer_sys::fuzz_target;
use strokeprim::io::{parse_feedback, write_feedback};

fuzz_target!(|text: &str| {
    if let Ok(records) = parse_feedback(text) {
        let back = parse_feedback(&write_feedback(&records)).expect("written feedback reloads");
        assert_eq!(back, records);
    }
});
