#![no_main]

use hostguard::integrity::BaselineManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = BaselineManifest::parse(data) {
        let again = BaselineManifest::parse(m.serialize().as_bytes()).expect("serialized manifest parses");
        assert_eq!(again, m);
    }
});
