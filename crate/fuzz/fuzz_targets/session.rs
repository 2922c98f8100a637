#![no_main]

use libfuzzer_sys::fuzz_target;
use strokeprim::session::Session;

fuzz_target!(|text: &str| {
    if let Ok(s) = Session::from_json(text) {
        let back = Session::from_json(&s.to_json()).expect("written session reloads");
        assert_eq!(back, s);
    }
});
