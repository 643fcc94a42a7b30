#![no_main]

use hostguard::hardening::{audit_runtime_config, HardeningPolicy};
use hostguard::ini::IniDocument;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = IniDocument::parse(text) {
        let _ = doc.get_any("disable_functions");
        let _ = audit_runtime_config(text, &HardeningPolicy::default());
    }
});
