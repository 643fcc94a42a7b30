//! Request records, as evaluated by the pipeline and stored in traces.
//!
//! Trace lines are JSON objects:
//!
//! ```text
//! {"source_ip":"203.0.113.7","method":"GET","path":"/index.php",
//!  "query_params":[["controller","../../../etc/passwd"]],
//!  "headers":[["User-Agent","Mozilla/5.0"]],
//!  "received_at":"2024-03-01T10:00:00.000Z"}
//! ```
//!
//! `body_params`, `upload_parts` and `login_outcome` are optional. Parameter
//! values are kept exactly as sent; decoding belongs to the stages.

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const FIRST_BYTES_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Head,
    Post,
    Put,
    Delete,
    Options,
    Patch,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Head => "HEAD",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Delete => "DELETE",
            Method::Options => "OPTIONS",
            Method::Patch => "PATCH",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "GET" => Method::Get,
            "HEAD" => Method::Head,
            "POST" => Method::Post,
            "PUT" => Method::Put,
            "DELETE" => Method::Delete,
            "OPTIONS" => Method::Options,
            "PATCH" => Method::Patch,
            other => return Err(format!("unsupported method {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoginOutcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadPart {
    pub field: String,
    pub filename: String,
    pub size: u64,
    /// At most [`FIRST_BYTES_LEN`] bytes; base64 in JSON.
    #[serde(serialize_with = "ser_b64", deserialize_with = "de_b64")]
    pub first_bytes: Vec<u8>,
}

fn ser_b64<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(b))
}

fn de_b64<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let s = String::deserialize(d)?;
    let v = base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(serde::de::Error::custom)?;
    if v.len() > FIRST_BYTES_LEN {
        return Err(serde::de::Error::custom("first_bytes longer than 256 bytes"));
    }
    Ok(v)
}

pub type Multimap = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpRequestRecord {
    pub source_ip: IpAddr,
    pub method: Method,
    pub path: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub query_params: Multimap,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub body_params: Multimap,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub headers: Multimap,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub upload_parts: Vec<UploadPart>,
    #[serde(with = "crate::timefmt::rfc3339_ms")]
    pub received_at: DateTime<Utc>,
    /// Outcome of a login attempt, when known (traces; the live proxy fills
    /// it in from the upstream response).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub login_outcome: Option<LoginOutcome>,
}

/// Splits a raw query or form body into pairs without decoding.
pub fn split_params(raw: &str) -> Multimap {
    raw.split('&')
        .filter(|p| !p.is_empty())
        .map(|p| match p.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (p.to_string(), String::new()),
        })
        .collect()
}

/// Percent-decodes once; `+` becomes a space when `form` is set. Invalid
/// escapes are kept literally.
pub fn url_decode(s: &str, form: bool) -> String {
    let replaced;
    let s = if form && s.contains('+') {
        replaced = s.replace('+', " ");
        replaced.as_str()
    } else {
        s
    };
    percent_encoding::percent_decode_str(s).decode_utf8_lossy().into_owned()
}

impl HttpRequestRecord {
    pub fn new(source_ip: IpAddr, method: Method, target: &str, received_at: DateTime<Utc>) -> Self {
        let (path, query) = match target.split_once('?') {
            Some((p, q)) => (p, q),
            None => (target, ""),
        };
        Self {
            source_ip,
            method,
            path: path.to_string(),
            query_params: split_params(query),
            body_params: Vec::new(),
            headers: Vec::new(),
            upload_parts: Vec::new(),
            received_at,
            login_outcome: None,
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn user_agent(&self) -> &str {
        self.header("user-agent").unwrap_or("")
    }

    pub fn query(&self, name: &str) -> Option<&str> {
        self.query_params
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    /// Every query and body parameter, query first, with an origin tag.
    pub fn all_params(&self) -> impl Iterator<Item = (&'static str, &str, &str)> {
        self.query_params
            .iter()
            .map(|(k, v)| ("query", k.as_str(), v.as_str()))
            .chain(self.body_params.iter().map(|(k, v)| ("body", k.as_str(), v.as_str())))
    }

    /// `ip|METHOD|template`, where the template is the decoded path with
    /// numeric segments and long hex segments replaced by placeholders, so
    /// `/post/123` and `/post/456` share a key.
    pub fn canonical_key(&self) -> String {
        format!("{}|{}|{}", self.source_ip, self.method, path_template(&self.path))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

pub fn path_template(path: &str) -> String {
    let decoded = url_decode(path, false);
    let segs: Vec<String> = decoded
        .split('/')
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.bytes().all(|b| b.is_ascii_digit()) {
                "{n}".to_string()
            } else if s.len() >= 16 && s.bytes().all(|b| b.is_ascii_hexdigit() || b == b'-') {
                "{h}".to_string()
            } else {
                s.to_string()
            }
        })
        .collect();
    format!("/{}", segs.join("/"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> DateTime<Utc> {
        crate::timefmt::parse("2024-03-01T10:00:00.000Z").unwrap()
    }

    #[test]
    fn target_splitting_keeps_raw_values() {
        let r = HttpRequestRecord::new(
            "203.0.113.7".parse().unwrap(),
            Method::Get,
            "/index.php?controller=..%2F..%2Fetc%2Fpasswd&flag&x=a=b",
            t0(),
        );
        assert_eq!(r.path, "/index.php");
        assert_eq!(
            r.query_params,
            vec![
                ("controller".into(), "..%2F..%2Fetc%2Fpasswd".into()),
                ("flag".into(), "".into()),
                ("x".into(), "a=b".into()),
            ]
        );
    }

    #[test]
    fn json_round_trip() {
        let mut r = HttpRequestRecord::new("2001:db8::1".parse().unwrap(), Method::Post, "/up.php", t0())
            .with_header("User-Agent", "Mozilla/5.0");
        r.upload_parts.push(UploadPart {
            field: "f".into(),
            filename: "a.jpg".into(),
            size: 3,
            first_bytes: vec![0xff, 0xd8, 0xff],
        });
        r.login_outcome = Some(LoginOutcome::Failure);
        let line = r.to_json_line();
        assert_eq!(serde_json::from_str::<HttpRequestRecord>(&line).unwrap(), r);
        assert_eq!(r.user_agent(), "Mozilla/5.0");
    }

    #[test]
    fn rejects_bad_records() {
        for bad in [
            r#"{"source_ip":"999.1.1.1","method":"GET","path":"/","received_at":"2024-03-01T10:00:00.000Z"}"#,
            r#"{"source_ip":"1.1.1.1","method":"BREW","path":"/","received_at":"2024-03-01T10:00:00.000Z"}"#,
            r#"{"source_ip":"1.1.1.1","method":"GET","path":"/"}"#,
            r#"{"source_ip":"1.1.1.1","method":"GET","path":"/","received_at":"2024-03-01T10:00:00.000Z","x":1}"#,
        ] {
            assert!(serde_json::from_str::<HttpRequestRecord>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn templates() {
        assert_eq!(path_template("/post/123/"), "/post/{n}");
        assert_eq!(path_template("//a/%31%32"), "/a/{n}");
        assert_eq!(path_template("/s/0123456789abcdef0"), "/s/{h}");
        assert_eq!(path_template(""), "/");
    }

    #[test]
    fn decoding() {
        assert_eq!(url_decode("a+b%2Fc%zz", true), "a b/c%zz");
        assert_eq!(url_decode("a+b", false), "a+b");
    }
}
