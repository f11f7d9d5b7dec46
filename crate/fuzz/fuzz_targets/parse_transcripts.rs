// SPDX-License-Identifier: MIT OR Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(convs) = persuasion_probe::parse_transcripts(data) {
        let text = persuasion_probe::write_transcripts(&convs);
        let again = persuasion_probe::parse_transcripts_str(&text).expect("written corpus parses");
        assert_eq!(again, convs);
    }
});
