//! Flat `key = value` configuration text, one pair per line, `#` comments.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub(crate) fn field<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
    module: &'static str,
) -> Result<Option<T>> {
    map.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| Error::param(module, format!("bad value `{v}` for `{key}`")))
        })
        .transpose()
}

#[cfg(test)]
mod tests {
    #[test]
    fn comments_and_spacing() {
        let m = super::parse("# top\n a = 1 \n\nb=x y\n").unwrap();
        assert_eq!(m["a"], "1");
        assert_eq!(m["b"], "x y");
        assert!(super::parse("novalue\n").is_err());
    }
}
