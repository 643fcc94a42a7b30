//! `multipart/form-data` bodies, split into form fields and upload parts.

use thiserror::Error;

use super::request::{Multimap, UploadPart, FIRST_BYTES_LEN};

pub const MAX_PARTS: usize = 1000;
const MAX_HEADER_BYTES: usize = 8 * 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MultipartError {
    #[error("content type has no usable boundary")]
    MissingBoundary,
    #[error("malformed multipart body: {0}")]
    Malformed(&'static str),
    #[error("more than {MAX_PARTS} parts")]
    TooManyParts,
}

/// Extracts the boundary parameter of a `multipart/form-data` content type.
pub fn boundary(content_type: &str) -> Result<String, MultipartError> {
    let mut it = content_type.split(';');
    let mime = it.next().unwrap_or("").trim();
    if !mime.eq_ignore_ascii_case("multipart/form-data") {
        return Err(MultipartError::MissingBoundary);
    }
    for p in it {
        if let Some((k, v)) = p.split_once('=') {
            if k.trim().eq_ignore_ascii_case("boundary") {
                let b = v.trim().trim_matches('"');
                if b.is_empty() || b.len() > 70 || b.bytes().any(|c| c.is_ascii_control()) {
                    return Err(MultipartError::MissingBoundary);
                }
                return Ok(b.to_string());
            }
        }
    }
    Err(MultipartError::MissingBoundary)
}

fn find(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > hay.len() {
        return None;
    }
    hay[from..].windows(needle.len()).position(|w| w == needle).map(|p| p + from)
}

/// Splits a header value on `;` outside double quotes.
fn header_params(header: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut quoted = false;
    let mut escaped = false;
    for c in header.chars() {
        let cur = out.last_mut().expect("nonempty");
        match c {
            _ if escaped => {
                cur.push(c);
                escaped = false;
            }
            '\\' if quoted => escaped = true,
            '"' => {
                quoted = !quoted;
                cur.push(c);
            }
            ';' if !quoted => out.push(String::new()),
            _ => cur.push(c),
        }
    }
    out
}

/// Parameter value from a header such as
/// `form-data; name="file"; filename="a.jpg"`.
fn disposition_param(header: &str, name: &str) -> Option<String> {
    header_params(header).into_iter().skip(1).find_map(|p| {
        let (k, v) = p.split_once('=')?;
        if !k.trim().eq_ignore_ascii_case(name) {
            return None;
        }
        let v = v.trim();
        Some(v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v).to_string())
    })
}

pub fn parse_multipart(content_type: &str, body: &[u8]) -> Result<(Multimap, Vec<UploadPart>), MultipartError> {
    let b = boundary(content_type)?;
    let delim = format!("--{b}");
    let delim = delim.as_bytes();
    let next_delim: Vec<u8> = [b"\r\n".as_slice(), delim].concat();
    let mut fields = Vec::new();
    let mut uploads = Vec::new();
    let mut pos = find(body, delim, 0).ok_or(MultipartError::Malformed("no opening boundary"))? + delim.len();
    loop {
        if body[pos..].starts_with(b"--") {
            return Ok((fields, uploads));
        }
        if !body[pos..].starts_with(b"\r\n") {
            return Err(MultipartError::Malformed("boundary not followed by CRLF"));
        }
        pos += 2;
        if fields.len() + uploads.len() >= MAX_PARTS {
            return Err(MultipartError::TooManyParts);
        }
        let head_end = find(body, b"\r\n\r\n", pos).ok_or(MultipartError::Malformed("unterminated part headers"))?;
        if head_end - pos > MAX_HEADER_BYTES {
            return Err(MultipartError::Malformed("part headers too long"));
        }
        let head = String::from_utf8_lossy(&body[pos..head_end]);
        let content_start = head_end + 4;
        let end = find(body, &next_delim, content_start).ok_or(MultipartError::Malformed("unterminated part"))?;
        let content = &body[content_start..end];
        let disposition = head
            .split("\r\n")
            .find_map(|l| {
                let (k, v) = l.split_once(':')?;
                k.trim().eq_ignore_ascii_case("content-disposition").then(|| v.trim().to_string())
            })
            .ok_or(MultipartError::Malformed("part without content-disposition"))?;
        let name = disposition_param(&disposition, "name").unwrap_or_default();
        match disposition_param(&disposition, "filename") {
            Some(filename) => uploads.push(UploadPart {
                field: name,
                filename,
                size: content.len() as u64,
                first_bytes: content[..content.len().min(FIRST_BYTES_LEN)].to_vec(),
            }),
            None => fields.push((name, String::from_utf8_lossy(content).into_owned())),
        }
        pos = end + next_delim.len();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CT: &str = "multipart/form-data; boundary=\"XyZ\"";

    #[test]
    fn fields_and_files() {
        let body = b"--XyZ\r\nContent-Disposition: form-data; name=\"title\"\r\n\r\nhello\r\n\
--XyZ\r\nContent-Disposition: form-data; name=\"file\"; filename=\"shell.php\"\r\nContent-Type: application/octet-stream\r\n\r\n<?php echo 1; ?>\r\n--XyZ--\r\n";
        let (f, u) = parse_multipart(CT, body).unwrap();
        assert_eq!(f, vec![("title".to_string(), "hello".to_string())]);
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].filename, "shell.php");
        assert_eq!(u[0].first_bytes, b"<?php echo 1; ?>");
        assert_eq!(u[0].size, 16);
    }

    #[test]
    fn quoted_semicolons_stay_in_filename() {
        assert_eq!(
            disposition_param(r#"form-data; name="f"; filename="a.asp;.jpg""#, "filename").as_deref(),
            Some("a.asp;.jpg")
        );
        assert_eq!(
            disposition_param(r#"form-data; flag; filename="q\"x.php""#, "filename").as_deref(),
            Some("q\"x.php")
        );
    }

    #[test]
    fn long_upload_keeps_prefix_only() {
        let mut body = b"--b\r\nContent-Disposition: form-data; name=\"f\"; filename=\"x.bin\"\r\n\r\n".to_vec();
        body.extend(std::iter::repeat(7u8).take(1000));
        body.extend_from_slice(b"\r\n--b--");
        let (_, u) = parse_multipart("multipart/form-data; boundary=b", &body).unwrap();
        assert_eq!(u[0].size, 1000);
        assert_eq!(u[0].first_bytes.len(), FIRST_BYTES_LEN);
    }

    #[test]
    fn rejects_malformed() {
        assert_eq!(boundary("text/plain"), Err(MultipartError::MissingBoundary));
        assert_eq!(boundary("multipart/form-data"), Err(MultipartError::MissingBoundary));
        assert!(parse_multipart("multipart/form-data; boundary=b", b"--b\r\nContent-Disposition: form-data; name=a\r\n\r\nx").is_err());
        assert!(parse_multipart("multipart/form-data; boundary=b", b"nothing").is_err());
        assert!(parse_multipart("multipart/form-data; boundary=b", b"--b\r\nX: y\r\n\r\nv\r\n--b--").is_err());
    }
}
