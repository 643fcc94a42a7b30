#![no_main]

use std::path::Path;

use hostguard::signatures::{scan_content, SignatureSet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = SignatureSet::parse(data, Path::new("fuzz.tsv")) {
        // Whatever loads must be usable on arbitrary content.
        let _ = scan_content(data, &set, "fuzz");
    }
});
