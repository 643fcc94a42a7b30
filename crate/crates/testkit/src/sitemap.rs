use hostguard::monitor::render_sitemap;
use rand::Rng;

use crate::tree::WORDS;

/// `n` distinct page URLs under `https://<host>/`.
pub fn site_urls(seed: u64, host: &str, n: usize) -> Vec<String> {
    let mut rng = crate::rng(seed);
    let mut out = std::collections::BTreeSet::new();
    while out.len() < n {
        let a = WORDS[rng.gen_range(0..WORDS.len())];
        let b = WORDS[rng.gen_range(0..WORDS.len())];
        out.insert(format!("https://{host}/{a}/{b}-{}/", rng.gen_range(1..10_000)));
    }
    out.into_iter().collect()
}

/// Spam links of the kind injected by fraud-ad campaigns, on foreign hosts.
pub fn injected_links(seed: u64, n: usize) -> Vec<String> {
    let mut rng = crate::rng(seed ^ 0xad5);
    (0..n)
        .map(|i| format!("https://cheap-{}-{i}.example/offer?id={}", rng.gen_range(100..999), rng.gen::<u32>()))
        .collect()
}

pub fn sitemap_doc(urls: &[String]) -> String {
    render_sitemap(urls.iter().map(String::as_str))
}
