use super::policy::GatewayPolicy;
use super::request::UploadPart;
use super::{clip, Flag, StageResult};

/// Every extension-like piece of a client filename, lowercased, outermost
/// last. Trailing dots and spaces are dropped the way Windows servers do,
/// and `;` or NUL count as separators.
pub fn filename_extensions(filename: &str) -> Vec<String> {
    let base = filename.rsplit(['/', '\\']).next().unwrap_or(filename);
    let base = base.trim_end_matches(['.', ' ']).to_ascii_lowercase();
    let mut pieces: Vec<String> = base
        .split(['.', ';', '\0'])
        .map(|p| p.trim().to_string())
        .collect();
    if pieces.len() <= 1 {
        return Vec::new();
    }
    pieces.remove(0);
    pieces.retain(|p| !p.is_empty());
    pieces
}

fn starts_with_php_tag(bytes: &[u8]) -> bool {
    let b = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let start = b.iter().position(|c| !c.is_ascii_whitespace()).unwrap_or(b.len());
    b[start..].len() >= 5 && b[start..start + 5].eq_ignore_ascii_case(b"<?php")
}

pub fn upload_check(parts: &[UploadPart], policy: &GatewayPolicy) -> StageResult {
    for part in parts {
        let ev = || vec![format!("field={}", clip(&part.field)), format!("filename={}", clip(&part.filename))];
        if let Some(ext) = filename_extensions(&part.filename)
            .into_iter()
            .find(|e| policy.banned_upload_extensions.contains(e))
        {
            let mut evidence = ev();
            evidence.push(format!("extension={ext}"));
            return Err(Flag::block("UPLOAD_EXTENSION", evidence));
        }
        if starts_with_php_tag(&part.first_bytes) {
            return Err(Flag::block("UPLOAD_PHP_CONTENT", ev()));
        }
    }
    Ok(())
}
