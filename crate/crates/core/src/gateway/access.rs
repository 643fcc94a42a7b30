//! A small subset of Apache per-directory (`.htaccess`) syntax: enough to
//! check that emitted deny rules say what they should.
//!
//! Understood: comments, `<IfModule>`, `<FilesMatch>` with `Require all
//! denied` or `Deny from all`, `RewriteEngine`, `RewriteRule` with `-` as
//! substitution and `[F]`/`[NC]`/`[L]` flags, `Options`, `Require`. Anything
//! else is rejected.

use regex::{Regex, RegexBuilder};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct AccessParseError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RewriteDeny {
    pub pattern: Regex,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AccessRules {
    pub rewrite_engine: bool,
    pub rewrite_denies: Vec<RewriteDeny>,
    pub files_denied: Vec<Regex>,
    pub options: Vec<String>,
}

fn tokens(line: &str) -> Result<Vec<String>, &'static str> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let mut tok = String::new();
        if c == '"' {
            chars.next();
            let mut closed = false;
            while let Some(c) = chars.next() {
                match c {
                    '\\' if chars.peek() == Some(&'"') => {
                        tok.push('"');
                        chars.next();
                    }
                    '"' => {
                        closed = true;
                        break;
                    }
                    c => tok.push(c),
                }
            }
            if !closed {
                return Err("unterminated quote");
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                tok.push(c);
                chars.next();
            }
        }
        out.push(tok);
    }
    Ok(out)
}

fn compile(pat: &str, nocase: bool) -> Result<Regex, String> {
    RegexBuilder::new(pat)
        .case_insensitive(nocase)
        .size_limit(1 << 20)
        .build()
        .map_err(|e| format!("bad pattern {pat:?}: {e}"))
}

enum Block {
    IfModule,
    FilesMatch(Regex, bool),
}

pub fn parse_access_rules(text: &str) -> Result<AccessRules, AccessParseError> {
    let mut rules = AccessRules::default();
    let mut stack: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |reason: String| AccessParseError { line, reason };
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if let Some(tag) = l.strip_prefix("</") {
            let name = tag.strip_suffix('>').ok_or_else(|| err("unterminated closing tag".into()))?;
            let open = stack.pop().ok_or_else(|| err(format!("</{name}> without opening tag")))?;
            match (name.trim().to_ascii_lowercase().as_str(), open) {
                ("ifmodule", Block::IfModule) => {}
                ("filesmatch", Block::FilesMatch(re, denied)) => {
                    if denied {
                        rules.files_denied.push(re);
                    }
                }
                (other, _) => return Err(err(format!("</{other}> closes the wrong block"))),
            }
            continue;
        }
        if let Some(tag) = l.strip_prefix('<') {
            let inner = tag.strip_suffix('>').ok_or_else(|| err("unterminated tag".into()))?;
            let toks = tokens(inner).map_err(|e| err(e.into()))?;
            match (toks.first().map(|t| t.to_ascii_lowercase()).as_deref(), toks.len()) {
                (Some("ifmodule"), 2) => stack.push(Block::IfModule),
                (Some("filesmatch"), 2) => stack.push(Block::FilesMatch(compile(&toks[1], false).map_err(err)?, false)),
                _ => return Err(err(format!("unsupported block <{inner}>"))),
            }
            continue;
        }
        let toks = tokens(l).map_err(|e| err(e.into()))?;
        let args = &toks[1..];
        match toks[0].to_ascii_lowercase().as_str() {
            "rewriteengine" => match args {
                [v] if v.eq_ignore_ascii_case("on") => rules.rewrite_engine = true,
                [v] if v.eq_ignore_ascii_case("off") => rules.rewrite_engine = false,
                _ => return Err(err("RewriteEngine takes On or Off".into())),
            },
            "rewriterule" => {
                let (pat, subst, flags) = match args {
                    [p, s] => (p, s, ""),
                    [p, s, f] => (p, s, f.as_str()),
                    _ => return Err(err("RewriteRule takes a pattern, a substitution and optional flags".into())),
                };
                let flags: Vec<String> = match flags {
                    "" => Vec::new(),
                    f => f
                        .strip_prefix('[')
                        .and_then(|f| f.strip_suffix(']'))
                        .ok_or_else(|| err(format!("bad flags {f:?}")))?
                        .split(',')
                        .map(|x| x.trim().to_ascii_uppercase())
                        .collect(),
                };
                if let Some(bad) = flags.iter().find(|f| !matches!(f.as_str(), "F" | "NC" | "L")) {
                    return Err(err(format!("unsupported flag {bad}")));
                }
                if subst != "-" {
                    return Err(err("only \"-\" substitutions are supported".into()));
                }
                let re = compile(pat, flags.iter().any(|f| f == "NC")).map_err(err)?;
                if flags.iter().any(|f| f == "F") {
                    rules.rewrite_denies.push(RewriteDeny { pattern: re, line });
                }
            }
            "require" | "deny" => {
                let denied = matches!(
                    args.iter().map(|a| a.to_ascii_lowercase()).collect::<Vec<_>>().as_slice(),
                    [a, b] if (a == "all" && b == "denied") || (a == "from" && b == "all")
                );
                match stack.last_mut() {
                    Some(Block::FilesMatch(_, d)) => *d |= denied,
                    _ if denied => return Err(err("blanket deny outside <FilesMatch>".into())),
                    _ => {}
                }
            }
            "options" => rules.options.extend(args.iter().cloned()),
            other => return Err(err(format!("unsupported directive {other}"))),
        }
    }
    if !stack.is_empty() {
        return Err(AccessParseError {
            line: text.lines().count(),
            reason: "unclosed block".into(),
        });
    }
    Ok(rules)
}

impl AccessRules {
    /// Whether a request for `rel_path` (relative to the directory holding
    /// the rules, no leading slash) is refused.
    pub fn denies(&self, rel_path: &str) -> bool {
        let rewrite = self.rewrite_engine && self.rewrite_denies.iter().any(|r| r.pattern.is_match(rel_path));
        let base = rel_path.rsplit('/').next().unwrap_or(rel_path);
        rewrite || self.files_denied.iter().any(|re| re.is_match(base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RULES: &str = r#"# no script execution under wp-content/uploads/
<IfModule mod_rewrite.c>
RewriteEngine On
RewriteRule "^wp\-content/uploads/.*\.(?:php[0-9]?|phtml|phar|pl|py|cgi|sh)(?:\.|$)" - [F,NC]
</IfModule>
<FilesMatch "^\.ht">
Require all denied
</FilesMatch>
Options -Indexes
"#;

    #[test]
    fn evaluates_rules() {
        let r = parse_access_rules(RULES).unwrap();
        assert!(r.denies("wp-content/uploads/2024/x.php"));
        assert!(r.denies("wp-content/uploads/x.PHP5"));
        assert!(r.denies("wp-content/uploads/x.php.jpg"));
        assert!(!r.denies("wp-content/uploads/x.jpg"));
        assert!(!r.denies("index.php"));
        assert!(r.denies("sub/.htaccess"));
        assert_eq!(r.options, vec!["-Indexes"]);
    }

    #[test]
    fn rejects_unknown_and_unbalanced() {
        assert_eq!(parse_access_rules("Header set X y\n").unwrap_err().line, 1);
        assert!(parse_access_rules("<IfModule x>\nRewriteEngine On\n").is_err());
        assert!(parse_access_rules("</IfModule>\n").is_err());
        assert!(parse_access_rules("RewriteRule ^a /b [R]\n").is_err());
        assert!(parse_access_rules("RewriteRule \"^(a\" - [F]\n").is_err());
        assert!(parse_access_rules("Require all denied\n").is_err());
    }
}
