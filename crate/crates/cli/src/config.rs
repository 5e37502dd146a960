//! JSON config parsing with dotted-path overrides.

use oui_core::harness::TrainConfig;
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("config key `{key}`: {message}")]
    Key { key: String, message: String },
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

/// Parses and validates a config, filling documented defaults.
pub fn parse_config(text: &str) -> Result<TrainConfig, ConfigError> {
    parse_with_overrides(text, &[])
}

/// Parses `text`, applies `key=value` overrides in order, then validates.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<TrainConfig, ConfigError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let config = from_value(value)?;
    let problems = config.problems();
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Validation(problems))
    }
}

fn from_value(value: Value) -> Result<TrainConfig, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        ConfigError::Key {
            key: if key == "." { "<root>".into() } else { key },
            message: e.into_inner().to_string(),
        }
    })
}

/// Sets `path.to.key` to `raw`, read as JSON when it parses and as a string
/// otherwise. Missing objects along the path are created; numeric segments
/// index into arrays.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .filter(|(k, _)| !k.trim().is_empty())
        .ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<&str> = path.trim().split('.').collect();
    let mut cur = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let bad = |msg: &str| ConfigError::Key {
            key: segments[..=i].join("."),
            message: msg.into(),
        };
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| bad("array index expected"))?;
                items.get_mut(idx).ok_or_else(|| bad("index out of range"))?
            }
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), new);
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert_with(|| Value::Object(Map::new()))
            }
            _ => return Err(bad("cannot descend into a scalar")),
        };
        if last {
            *cur = new;
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use oui_core::oui::{Band, PairSamplePolicy};
    use proptest::prelude::{prop_assert_eq, proptest};

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.optimizer.momentum, 0.9);
        assert_eq!(cfg.oui, PairSamplePolicy::sampled(28, 10));
        assert_eq!(cfg.oui_band, Band { low: 0.6, high: 0.8 });
        assert_eq!(cfg.early_fraction, 0.15);
    }

    #[test]
    fn batch_size_one_is_rejected() {
        match parse_config(r#"{"batch_size": 1}"#) {
            Err(ConfigError::Validation(p)) => assert!(p.iter().any(|s| s.contains("batch_size"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inverted_band_is_rejected() {
        match parse_config(r#"{"oui_band": [0.8, 0.6]}"#) {
            Err(ConfigError::Validation(p)) => assert!(p.iter().any(|s| s.contains("oui_band"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_problem_is_listed() {
        match parse_config(r#"{"batch_size": 1, "oui_band": [0.8, 0.6], "early_fraction": 0}"#) {
            Err(ConfigError::Validation(p)) => assert_eq!(p.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        match parse_config("{\n  \"epochs\": 3,\n  oops\n}") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        match parse_config(r#"{"optimizer": {"momentun": 0.5}}"#) {
            Err(ConfigError::Key { key, message }) => {
                assert_eq!(key, "optimizer.momentun");
                assert!(message.contains("momentun"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match parse_config(r#"{"epochs": "ten"}"#) {
            Err(ConfigError::Key { key, .. }) => assert_eq!(key, "epochs"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_apply_after_file() {
        let cfg = parse_with_overrides(
            r#"{"optimizer": {"momentum": 0.5}, "epochs": 3}"#,
            &["optimizer.momentum=0.8".into(), "seeds.oui=11".into(), "timing=off".into()],
        )
        .unwrap();
        assert_eq!(cfg.optimizer.momentum, 0.8);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.seeds.oui, 11);
        assert_eq!(cfg.seeds.init, 2);
        assert_eq!(cfg.timing, oui_core::harness::Timing::Off);
    }

    #[test]
    fn override_into_array() {
        let mut v: Value = serde_json::from_str(r#"{"a": [{"b": 1}, {"b": 2}]}"#).unwrap();
        apply_override(&mut v, "a.1.b=5").unwrap();
        assert_eq!(v["a"][1]["b"], 5);
        assert!(apply_override(&mut v, "a.7.b=5").is_err());
        assert!(apply_override(&mut v, "a.0.b.c=5").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn default_round_trips() {
        let cfg = TrainConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn accepted_configs_round_trip(
            momentum in 0.0f64..0.999,
            lr in 1e-4f64..1.0,
            wd in 0.0f64..0.5,
            epochs in 1usize..200,
            batch in 2usize..256,
            low in 0.0f64..0.5,
            width in 0.01f64..0.5,
            seed in proptest::num::u64::ANY,
            pairs in 1usize..64,
            exhaustive in proptest::bool::ANY,
        ) {
            let text = serde_json::json!({
                "optimizer": {"momentum": momentum},
                "schedule": {"kind": "cosine", "lr_start": lr, "lr_end": lr / 10.0},
                "weight_decay": wd,
                "epochs": epochs,
                "batch_size": batch,
                "oui_band": [low, low + width],
                "seeds": {"data": seed, "init": seed ^ 1},
                "oui": {"pairs": if exhaustive { serde_json::json!("exhaustive") } else { serde_json::json!({"sampled": pairs}) }, "batch_interval": 3},
            })
            .to_string();
            let cfg = parse_config(&text).unwrap();
            let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
            prop_assert_eq!(again, cfg);
        }
    }
}
