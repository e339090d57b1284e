//! `key = value` text used by config files, reports and checkpoint metadata.

use crate::error::{Error, Result};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped; a
/// line without `=` is a configuration error naming its line number.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splits a command-line override `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::usage(format!("override must be key=value, got {s:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let kv = parse_kv("# model\nbackbone = unet\n\nseed=3 # trailing\n").unwrap();
        assert_eq!(kv, vec![("backbone".into(), "unet".into()), ("seed".into(), "3".into())]);
        assert!(matches!(parse_kv("oops"), Err(Error::Config(_))));
        assert_eq!(parse_override("a=b=c").unwrap(), ("a".into(), "b=c".into()));
    }
}
