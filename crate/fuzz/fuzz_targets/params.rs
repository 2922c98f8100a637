#![no_main]

use libfuzzer_sys::fuzz_target;
use strokeprim::io::{params_from_json, params_to_json};

fuzz_target!(|text: &str| {
    if let Ok(p) = params_from_json(text) {
        let back = params_from_json(&params_to_json(&p)).expect("written params reload");
        assert_eq!(back, p);
    }
});
