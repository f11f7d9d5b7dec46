// SPDX-License-Identifier: MIT OR Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(bundle) = persuasion_probe::decode_bundle(data) {
        let bytes = persuasion_probe::encode_bundle(&bundle).expect("decoded bundle encodes");
        assert_eq!(
            persuasion_probe::decode_bundle(&bytes).expect("round trip"),
            bundle
        );
    }
});
