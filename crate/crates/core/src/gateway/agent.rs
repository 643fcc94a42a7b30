use super::policy::GatewayPolicy;
use super::{clip, Flag, StageResult};

/// Scripted clients either announce themselves or send no agent at all, so
/// both block.
pub fn agent_allowed(user_agent: &str, policy: &GatewayPolicy) -> StageResult {
    if user_agent.trim().is_empty() {
        return Err(Flag::block("AGENT_MISSING", vec!["user_agent=".into()]));
    }
    match policy.blocked_agent_patterns.iter().find(|re| re.is_match(user_agent)) {
        Some(re) => Err(Flag::block(
            "AGENT_BLOCKED",
            vec![format!("pattern={}", re.as_str()), format!("user_agent={}", clip(user_agent))],
        )),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agents() {
        let p = GatewayPolicy::default();
        for ua in ["curl/7.68.0", "Wget/1.21", "python-requests/2.31", "lwp-request libwww-perl/6.0", "CURL/8"] {
            assert_eq!(agent_allowed(ua, &p).unwrap_err().reason_code, "AGENT_BLOCKED", "{ua}");
        }
        assert_eq!(agent_allowed("  ", &p).unwrap_err().reason_code, "AGENT_MISSING");
        let firefox = "Mozilla/5.0 (X11; Linux x86_64; rv:125.0) Gecko/20100101 Firefox/125.0";
        assert!(agent_allowed(firefox, &p).is_ok());
        // word boundary: not every "curl" substring is the tool
        assert!(agent_allowed("Mozilla/5.0 curly-browser", &p).is_ok());
    }
}
