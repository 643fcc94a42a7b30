#![no_main]

use hostguard::gateway::GeoTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = GeoTable::parse(text) {
        for ip in ["198.51.100.7", "203.0.113.200", "2001:db8:a::1", "0.0.0.0"] {
            let _ = t.country(ip.parse().expect("literal"));
        }
    }
});
