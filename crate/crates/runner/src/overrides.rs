//! `key.path=value` overrides applied to the JSON form of a config.

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Sets `path` (dot separated) inside `root`. The value is parsed as JSON
/// when possible and kept as a string otherwise. Every segment must already
/// exist, so typos are reported instead of silently ignored.
pub fn set_path(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let here = segments[..=i].join(".");
        node = match node {
            Value::Object(map) => map
                .get_mut(*seg)
                .ok_or_else(|| anyhow!("unknown config field `{here}`"))?,
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .with_context(|| format!("`{here}`: expected an array index"))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| anyhow!("`{here}`: index out of range"))?
            }
            _ => bail!("`{here}`: cannot descend into a scalar"),
        };
    }
    *node = value;
    Ok(())
}

/// Applies `key=value` overrides to `config` through its JSON form.
pub fn apply<T: Serialize + DeserializeOwned>(config: &T, overrides: &[String]) -> Result<T> {
    if overrides.is_empty() {
        return Ok(serde_json::from_value(serde_json::to_value(config)?)?);
    }
    let mut value = serde_json::to_value(config)?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{o}` is not of the form key=value"))?;
        set_path(&mut value, key.trim(), raw.trim())?;
    }
    serde_json::from_value(value).context("config invalid after overrides")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn nested_override() {
        let mut v = json!({"a": {"b": 1, "c": [1, 2]}, "s": "x"});
        set_path(&mut v, "a.b", "5").unwrap();
        set_path(&mut v, "a.c.1", "7").unwrap();
        set_path(&mut v, "s", "hello").unwrap();
        assert_eq!(v, json!({"a": {"b": 5, "c": [1, 7]}, "s": "hello"}));
        assert!(set_path(&mut v, "a.missing", "1").is_err());
    }
}
