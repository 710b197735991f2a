//! Plain-text `key = value` parameter files.
//!
//! Keys are flag names without the leading dashes (`lambda`, `steps-list`);
//! underscores are accepted in place of dashes. Blank lines and lines
//! starting with `#` are ignored.

use std::path::Path;

use crate::error::{Result, WalkError};

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| WalkError::Parse(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(WalkError::Parse(format!("config line {}: invalid key {key:?}", lineno + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| WalkError::io(path, e))?;
    parse_config(&text)
}

/// `["--key", "value", ...]` for splicing into an argument list.
pub fn config_args(pairs: &[(String, String)]) -> Vec<String> {
    pairs
        .iter()
        .flat_map(|(k, v)| [format!("--{k}"), v.clone()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_skips_comments() {
        let pairs = parse_config("# fig 2\ngraph = ring:15\n\nsteps_list=250,1000\n--seed = 7\n").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("graph".into(), "ring:15".into()),
                ("steps-list".into(), "250,1000".into()),
                ("seed".into(), "7".into()),
            ]
        );
        assert_eq!(config_args(&pairs[..1]), vec!["--graph", "ring:15"]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_config("lambda 0.5").is_err());
        assert!(parse_config("= 3").is_err());
        assert!(parse_config("config = other.cfg").is_err());
    }
}
