#![no_main]

use libfuzzer_sys::fuzz_target;
use strokeprim::io::{parse_observations, write_observations};

fuzz_target!(|text: &str| {
    if let Ok(obs) = parse_observations(text) {
        let back = parse_observations(&write_observations(&obs)).expect("written observations reload");
        assert_eq!(back, obs);
    }
});
