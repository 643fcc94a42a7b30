use super::request::url_decode;
use super::{clip, Flag, StageResult};

/// Rounds of percent-decoding applied before inspection.
pub const DECODE_ROUNDS: usize = 2;

const REMOTE_SCHEMES: [&str; 5] = ["http", "https", "ftp", "php", "data"];

/// True when walking the path's segments climbs above where it started.
pub fn escapes_root(value: &str) -> bool {
    let norm = value.replace('\\', "/");
    let mut depth: i64 = 0;
    for seg in norm.split('/') {
        match seg.trim_end_matches('\0') {
            ".." => {
                depth -= 1;
                if depth < 0 {
                    return true;
                }
            }
            "" | "." => {}
            _ => depth += 1,
        }
    }
    false
}

pub fn remote_scheme(value: &str) -> Option<String> {
    let u = url::Url::parse(value.trim()).ok()?;
    REMOTE_SCHEMES.contains(&u.scheme()).then(|| u.scheme().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inclusion {
    Lfi,
    Rfi,
    TooDeep,
}

impl Inclusion {
    pub fn code(self) -> &'static str {
        match self {
            Inclusion::Lfi => "LFI",
            Inclusion::Rfi => "RFI",
            Inclusion::TooDeep => "ENCODING_DEPTH",
        }
    }
}

/// The raw value followed by each distinct result of up to
/// [`DECODE_ROUNDS`] decoding passes.
pub fn decoded_forms(raw: &str) -> Vec<String> {
    let mut forms = vec![raw.to_string()];
    for _ in 0..DECODE_ROUNDS {
        let next = url_decode(forms.last().expect("nonempty"), true);
        if &next == forms.last().expect("nonempty") {
            break;
        }
        forms.push(next);
    }
    forms
}

/// Inspects one raw value; returns the finding and the decoded form it was
/// seen in.
pub fn inspect_value(raw: &str) -> Option<(Inclusion, String)> {
    let forms = decoded_forms(raw);
    for f in &forms {
        if escapes_root(f) {
            return Some((Inclusion::Lfi, f.clone()));
        }
    }
    for f in &forms {
        if remote_scheme(f).is_some() {
            return Some((Inclusion::Rfi, f.clone()));
        }
    }
    let last = forms.last().expect("nonempty");
    if forms.len() > DECODE_ROUNDS && url_decode(last, true) != *last {
        return Some((Inclusion::TooDeep, last.clone()));
    }
    None
}

/// `params` yields `(origin, name, raw value)`.
pub fn inclusion_check<'o, 'a>(params: impl IntoIterator<Item = (&'o str, &'a str, &'a str)>) -> StageResult {
    for (origin, name, value) in params {
        if let Some((kind, decoded)) = inspect_value(value) {
            return Err(Flag::block(
                kind.code(),
                vec![format!("param={origin}:{}", clip(name)), format!("value={}", clip(&decoded))],
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(v: &str) -> Option<&'static str> {
        inspect_value(v).map(|(k, _)| k.code())
    }

    #[test]
    fn traversal() {
        assert_eq!(code("../../../etc/passwd"), Some("LFI"));
        assert_eq!(code("..%2F..%2F..%2Fetc%2Fpasswd"), Some("LFI"));
        assert_eq!(code("%252e%252e%252fetc%252fpasswd"), Some("LFI"));
        assert_eq!(code("..\\..\\windows\\win.ini"), Some("LFI"));
        assert_eq!(code("themes/../index"), None);
        assert_eq!(code("themes/a/../../../x"), Some("LFI"));
        assert_eq!(code("about-us"), None);
        assert_eq!(code("..."), None);
    }

    #[test]
    fn remote() {
        assert_eq!(code("http://www.virus.com/exploit.txt"), Some("RFI"));
        assert_eq!(code("HTTPS://x.example/a"), Some("RFI"));
        assert_eq!(code("php://filter/convert.base64-encode/resource=index"), Some("RFI"));
        assert_eq!(code("data:text/plain;base64,PD9waHA="), Some("RFI"));
        assert_eq!(code("http%3A%2F%2Fevil.example%2Fx"), Some("RFI"));
        assert_eq!(code("mailto:a@b.example"), None);
        assert_eq!(code("see http://x later"), None);
    }

    #[test]
    fn encoding_depth() {
        // three layers: %25252e -> %252e -> %2e -> .
        assert_eq!(code("%25252e"), Some("ENCODING_DEPTH"));
        assert_eq!(code("100%25"), None);
        assert_eq!(code("a%20b"), None);
    }

    #[test]
    fn reports_parameter() {
        let f = inclusion_check([("query", "page", "about"), ("query", "controller", "../../../etc/passwd")])
            .unwrap_err();
        assert_eq!(f.reason_code, "LFI");
        assert_eq!(f.evidence, vec!["param=query:controller", "value=../../../etc/passwd"]);
    }
}
