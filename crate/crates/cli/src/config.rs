//! JSON config files layered over presets.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Reads `path` and overlays its keys on `base`. Nested objects merge key by
/// key; any other value replaces the preset. Unknown keys are rejected by the
/// target type.
pub fn load<T: Serialize + DeserializeOwned>(base: T, path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(base) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let overlay: Value = serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if !overlay.is_object() {
        return Err(CliError::Config {
            path: path.to_path_buf(),
            reason: "top level must be a JSON object".into(),
        });
    }
    let mut merged = serde_json::to_value(base)?;
    merge(&mut merged, overlay);
    serde_json::from_value(merged).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Seed from the flag, else from `SFC_SEED`.
pub fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SFC_SEED") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| CliError::Invalid {
            field: "SFC_SEED".into(),
            reason: format!("expected an unsigned integer, got `{s}`"),
        }),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn nested_objects_merge_and_scalars_replace() {
        let mut base = json!({"a": 1, "b": {"x": 1, "y": 2}, "c": [1, 2]});
        merge(&mut base, json!({"b": {"y": 5}, "c": [3]}));
        assert_eq!(base, json!({"a": 1, "b": {"x": 1, "y": 5}, "c": [3]}));
    }

    #[test]
    fn null_replaces_an_object() {
        let mut base = json!({"d90_max": 1.0});
        merge(&mut base, json!({"d90_max": null}));
        assert_eq!(base, json!({"d90_max": null}));
    }
}
