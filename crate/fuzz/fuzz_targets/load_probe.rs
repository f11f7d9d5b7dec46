// SPDX-License-Identifier: MIT OR Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(probe) = persuasion_probe::load_probe(data) {
        let bytes = persuasion_probe::save_probe(&probe).expect("loaded probe saves");
        persuasion_probe::load_probe(&bytes).expect("round trip");
    }
});
