#![no_main]

use std::path::PathBuf;

use hostguard_cli::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = Config::from_parts(text, None, PathBuf::from("/srv/site"), &[]);
});
