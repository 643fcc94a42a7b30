#![no_main]

use hostguard::gateway::parse_access_rules;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rules) = parse_access_rules(text) {
        for p in ["index.php", "wp-content/uploads/x.php", "a/b/c.txt"] {
            let _ = rules.denies(p);
        }
    }
});
