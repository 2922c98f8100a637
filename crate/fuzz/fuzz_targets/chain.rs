#![no_main]

use libfuzzer_sys::fuzz_target;
use strokeprim::io::{chain_from_json, chain_to_json};

fuzz_target!(|text: &str| {
    if let Ok(file) = chain_from_json(text) {
        let back = chain_from_json(&chain_to_json(&file.chain, file.limits.as_ref())).expect("written chain reloads");
        assert_eq!(back.limits, file.limits);
        assert_eq!(back.chain.tool(), file.chain.tool());
        assert_eq!(back.chain.joints().len(), file.chain.joints().len());
        for (a, b) in back.chain.joints().iter().zip(file.chain.joints()) {
            assert_eq!((a.kind, a.axis, a.origin.translation), (b.kind, b.axis, b.origin.translation));
            assert!(a.origin.rotation.angle_to(&b.origin.rotation) < 1e-9);
        }
    }
});
