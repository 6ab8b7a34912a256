//! Layered configuration: defaults, then a JSON file, then flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::commands::{read_text, CliError};

/// Recursively overlays `patch` onto `base`. Objects merge key by key;
/// anything else replaces.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// The JSON object in `path`, or an empty object when no file is given.
pub fn read_file(path: Option<&Path>) -> Result<Value, CliError> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = read_text(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
    if !value.is_object() {
        return Err(CliError::new("config", format!("{}: top level must be an object", path.display())));
    }
    Ok(value)
}

/// `defaults` with `section` of the config file applied on top.
pub fn layer<T: Serialize + DeserializeOwned>(defaults: &T, file: &Value, section: &str) -> Result<T, CliError> {
    let mut base = serde_json::to_value(defaults).expect("defaults serialize");
    if let Some(patch) = file.get(section) {
        merge(&mut base, patch);
    }
    serde_json::from_value(base).map_err(|e| CliError::new("config", format!("section `{section}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_is_recursive() {
        let mut base = json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge(&mut base, &json!({"b": {"d": 4}, "e": [1]}));
        assert_eq!(base, json!({"a": 1, "b": {"c": 2, "d": 4}, "e": [1]}));
    }

    #[test]
    fn layer_keeps_unspecified_defaults() {
        let cfg: leadae::train::TrainConfig = layer(
            &Default::default(),
            &json!({"train": {"patience": 3, "adam": {"lr": 0.01}}}),
            "train",
        )
        .unwrap();
        assert_eq!(cfg.patience, 3);
        assert_eq!(cfg.adam.lr, 0.01);
        assert_eq!(cfg.adam.beta1, 0.9);
        assert_eq!(cfg.batch_size, 8);
    }

    #[test]
    fn bad_section_is_a_config_error() {
        let r: Result<leadae::train::TrainConfig, _> =
            layer(&Default::default(), &json!({"train": {"patience": "x"}}), "train");
        assert_eq!(r.unwrap_err().category, "config");
    }
}
