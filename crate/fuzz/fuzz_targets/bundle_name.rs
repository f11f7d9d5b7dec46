// SPDX-License-Identifier: MIT OR Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;

use pprobe_cli::corpus::BundleName;

fuzz_target!(|data: &[u8]| {
    if let Ok(name) = std::str::from_utf8(data) {
        if let Some(parsed) = BundleName::parse(name) {
            assert_eq!(BundleName::parse(&parsed.file_name()), Some(parsed));
        }
    }
});
