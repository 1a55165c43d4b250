//! Plain `key = value` config-file parsing shared by the training config
//! and the synthetic dataset spec.

use crate::error::{Error, Result};

/// Parse `key = value` lines; `#` comment lines and blanks are skipped.
/// Returns `(key, value, line_number)` triples in file order.
pub(crate) fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(
                origin,
                lineno + 1,
                format!("expected `key = value`, found {line:?}"),
            ));
        };
        out.push((key.trim().to_string(), value.trim().to_string(), lineno + 1));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(
    value: &str,
    key: &str,
    origin: &str,
    line: usize,
) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(origin, line, format!("bad value {value:?} for {key}")))
}
