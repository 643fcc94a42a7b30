#![no_main]

use hostguard::bloomset::BloomSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(bf) = BloomSet::deserialize(data) {
        let _ = bf.contains(data);
        let copy = BloomSet::deserialize(&bf.serialize()).expect("round trip");
        assert_eq!(copy.contains(b"probe"), bf.contains(b"probe"));
    }
});
