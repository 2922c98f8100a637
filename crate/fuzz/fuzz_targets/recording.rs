#![no_main]

use libfuzzer_sys::fuzz_target;
use strokeprim::io::{parse_recording, write_recording};

fuzz_target!(|text: &str| {
    if let Ok(rec) = parse_recording(text) {
        let back = parse_recording(&write_recording(&rec, true)).expect("written recording reloads");
        assert_eq!(back, rec);
    }
});
