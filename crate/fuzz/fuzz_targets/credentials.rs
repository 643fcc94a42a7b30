#![no_main]

use hostguard::hardening::{audit_credentials, HardeningPolicy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = audit_credentials(text, &HardeningPolicy::default());
});
