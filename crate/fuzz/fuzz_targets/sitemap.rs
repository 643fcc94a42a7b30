#![no_main]

use hostguard::monitor::{parse_sitemap, render_sitemap};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(urls) = parse_sitemap(text) {
        let doc = render_sitemap(urls.iter().map(String::as_str));
        let again = parse_sitemap(&doc).expect("rendered sitemap parses");
        assert_eq!(again.len(), urls.len());
    }
});
