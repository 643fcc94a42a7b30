#![no_main]

use hostguard::gateway::multipart::parse_multipart;
use libfuzzer_sys::fuzz_target;

// First line is the Content-Type header value, the rest is the body.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|b| *b == b'\n').unwrap_or(data.len());
    let Ok(ct) = std::str::from_utf8(&data[..split]) else { return };
    let body = data.get(split + 1..).unwrap_or_default();
    let _ = parse_multipart(ct.trim_end_matches('\r'), body);
});
