#![no_main]

use libfuzzer_sys::fuzz_target;
use strokeprim::sim::Scenario;

fuzz_target!(|text: &str| {
    if let Ok(s) = Scenario::from_json(text) {
        let back = Scenario::from_json(&s.to_json()).expect("written scenario reloads");
        assert_eq!(back, s);
    }
});
