//! Flag and config-file handling shared by every subcommand.
//!
//! Settings arrive as `--key value` (or `--key=value`) pairs and from flat
//! `key = value` files named by `--config`. File values are applied first, in
//! order, then flags, so a flag always wins.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use localnewton_core::harness::{normalize_key, parse_config_text};

/// A usage or configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Splits raw tokens into `(key, value)` pairs. A flag followed by another
/// flag, or by nothing, reads as `true`.
pub fn split_flags(tokens: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        let Some(body) = tok.strip_prefix("--") else {
            return Err(usage(format!("expected a --key, got `{tok}`")));
        };
        if body.is_empty() {
            return Err(usage("empty flag `--`"));
        }
        if let Some((k, v)) = body.split_once('=') {
            out.push((normalize_key(k), v.to_string()));
            i += 1;
            continue;
        }
        match tokens.get(i + 1) {
            Some(next) if !next.starts_with("--") => {
                out.push((normalize_key(body), next.clone()));
                i += 2;
            }
            _ => {
                out.push((normalize_key(body), "true".to_string()));
                i += 1;
            }
        }
    }
    Ok(out)
}

/// File settings followed by flag settings, with `config` entries resolved.
pub fn resolve(tokens: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    let flags = split_flags(tokens)?;
    let mut pairs = Vec::new();
    for (k, v) in flags.iter().filter(|(k, _)| k == "config") {
        let text = std::fs::read_to_string(Path::new(v)).map_err(|e| usage(format!("cannot read {k} file {v}: {e}")))?;
        let parsed = parse_config_text(&text).map_err(|e| usage(format!("{v}: {e}")))?;
        if parsed.iter().any(|(k, _)| k == "config") {
            return Err(usage(format!("{v}: config files cannot include other config files")));
        }
        pairs.extend(parsed);
    }
    pairs.extend(flags.into_iter().filter(|(k, _)| k != "config"));
    Ok(pairs)
}

pub fn parse_value<T: FromStr>(key: &str, v: &str) -> anyhow::Result<T>
where
    T::Err: fmt::Display,
{
    v.trim().parse().map_err(|e| usage(format!("bad value `{v}` for {key}: {e}")))
}

/// `none` (or empty) reads as absent.
pub fn parse_optional<T: FromStr>(key: &str, v: &str) -> anyhow::Result<Option<T>>
where
    T::Err: fmt::Display,
{
    match v.trim() {
        "" | "none" => Ok(None),
        s => parse_value(key, s).map(Some),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn flag_forms() {
        let p = split_flags(&toks("--max-rounds 9 --gamma=0.5 --expand --k 4")).unwrap();
        let want = [("max_rounds", "9"), ("gamma", "0.5"), ("expand", "true"), ("k", "4")];
        assert_eq!(p, want.map(|(a, b)| (a.to_string(), b.to_string())));
        assert!(split_flags(&toks("stray")).is_err());
        // Negative numbers are values, not flags.
        assert_eq!(split_flags(&toks("--seed -1")).unwrap()[0].1, "-1");
    }

    #[test]
    fn flags_override_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cfg");
        std::fs::write(&path, "k = 8\nseed = 3\n").unwrap();
        let mut t = toks("--k 2");
        t.push("--config".into());
        t.push(path.display().to_string());
        let p = resolve(&t).unwrap();
        assert_eq!(p.last().unwrap(), &("k".to_string(), "2".to_string()));
        assert_eq!(p[0], ("k".to_string(), "8".to_string()));
    }
}
