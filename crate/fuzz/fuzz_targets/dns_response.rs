#![no_main]

use hostguard::gateway::dnsbl::{interpret, parse_response};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(resp) = parse_response(data) {
        let _ = interpret(&resp);
    }
});
