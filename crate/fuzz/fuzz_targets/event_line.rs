#![no_main]

use hostguard::monitor::{parse_event_line, window_features, GroupBy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(ev) = parse_event_line(line) {
        let again = parse_event_line(&ev.to_json_line()).expect("serialized event parses");
        assert_eq!(again, ev);
        let _ = window_features(&[ev], 60, GroupBy::Script);
    }
});
