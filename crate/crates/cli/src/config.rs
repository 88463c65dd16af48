//! Flat `key = value` experiment configuration with `[section]` headers.
//!
//! The format is deliberately line-oriented and diff friendly:
//!
//! ```text
//! seed = 7
//!
//! [dataset]
//! classes = 6
//! clips_per_class = 20
//! eval_clips_per_class = 10
//! frames = 16
//! height = 32
//! width = 32
//! v_min = -1
//! v_max = 1
//! noise_sigma = 0.02
//!
//! [train]
//! arch = a
//! epochs = 30
//! batch_size = 8
//! learning_rate = 0.003
//!
//! [attack]
//! mode = universal
//! time_invariant = false
//! linf_pct = 20
//! iterations = 1200
//! batch_size = 8
//! learning_rate = 0.001
//! margin = 0.05
//! space = prob
//! lambda = 1
//! beta1 = 0.5
//! beta2 = 0.5
//! eval_every = 50
//!
//! [channel]
//! crosstalk = 1,0,0,0,1,0,0,0,1
//! rise_alpha = 1
//! phase = 0
//! ambient = 0,0,0
//! noise_sigma = 0
//!
//! [sweep]
//! linf_pct = 5,10,15,20
//! repeats = 10
//!
//! [output]
//! dir = out
//! ```
//!
//! `#` starts a comment. Unknown sections or keys are rejected so a typo
//! cannot silently fall back to a default. Command-line flags override
//! config values, which override built-in defaults.

use flicker_core::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

const SECTIONS: &[&str] = &["", "dataset", "train", "attack", "channel", "sweep", "output"];

const KEYS: &[(&str, &str)] = &[
    ("", "seed"),
    ("dataset", "classes"),
    ("dataset", "clips_per_class"),
    ("dataset", "eval_clips_per_class"),
    ("dataset", "frames"),
    ("dataset", "height"),
    ("dataset", "width"),
    ("dataset", "v_min"),
    ("dataset", "v_max"),
    ("dataset", "noise_sigma"),
    ("train", "arch"),
    ("train", "epochs"),
    ("train", "batch_size"),
    ("train", "learning_rate"),
    ("attack", "mode"),
    ("attack", "class_id"),
    ("attack", "clip_index"),
    ("attack", "time_invariant"),
    ("attack", "linf_pct"),
    ("attack", "iterations"),
    ("attack", "batch_size"),
    ("attack", "learning_rate"),
    ("attack", "margin"),
    ("attack", "space"),
    ("attack", "lambda"),
    ("attack", "beta1"),
    ("attack", "beta2"),
    ("attack", "eval_every"),
    ("channel", "crosstalk"),
    ("channel", "rise_alpha"),
    ("channel", "phase"),
    ("channel", "ambient"),
    ("channel", "noise_sigma"),
    ("sweep", "linf_pct"),
    ("sweep", "repeats"),
    ("sweep", "iterations"),
    ("output", "dir"),
];

/// Parsed experiment configuration.
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    values: BTreeMap<(String, String), String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        Error::validation(format!("config line {}: unclosed section", lineno + 1))
                    })?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::validation(format!(
                        "config line {}: unknown section [{}]",
                        lineno + 1,
                        name
                    )));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::validation(format!(
                    "config line {}: expected `key = value`, got {:?}",
                    lineno + 1,
                    line
                ))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KEYS.contains(&(section.as_str(), key.as_str())) {
                return Err(Error::validation(format!(
                    "config line {}: unknown key `{}` in section [{}]",
                    lineno + 1,
                    key,
                    section
                )));
            }
            values.insert((section.clone(), key), value);
        }
        Ok(ExperimentConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Validation(msg) => Error::validation(format!("{}: {}", path.display(), msg)),
            other => other,
        })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(|s| s.as_str())
    }

    pub fn parse_value<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::validation(format!(
                    "config key [{}] {} = {:?} is not a valid {}",
                    section,
                    key,
                    raw,
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    /// Comma-separated list value.
    pub fn parse_list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|piece| {
                    piece.trim().parse::<T>().map_err(|_| {
                        Error::validation(format!(
                            "config key [{}] {}: bad list element {:?}",
                            section, key, piece
                        ))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// `flag.or(config).unwrap_or(default)` helper for resolved settings.
pub fn resolve<T: Copy>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_values() {
        let text = "seed = 9 # global\n\n[dataset]\nclasses = 4\nnoise_sigma = 0.05\n[output]\ndir = results\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.parse_value::<u64>("", "seed").unwrap(), Some(9));
        assert_eq!(cfg.parse_value::<usize>("dataset", "classes").unwrap(), Some(4));
        assert_eq!(cfg.get("output", "dir"), Some("results"));
        assert_eq!(cfg.get("dataset", "frames"), None);
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        assert!(ExperimentConfig::parse("[nope]\n").is_err());
        assert!(ExperimentConfig::parse("[dataset]\ntypo = 3\n").is_err());
        assert!(ExperimentConfig::parse("just a line\n").is_err());
    }

    #[test]
    fn rejects_bad_values_on_use() {
        let cfg = ExperimentConfig::parse("[dataset]\nclasses = many\n").unwrap();
        assert!(cfg.parse_value::<usize>("dataset", "classes").is_err());
    }

    #[test]
    fn parses_lists() {
        let cfg = ExperimentConfig::parse("[sweep]\nlinf_pct = 5, 10, 15, 20\n").unwrap();
        assert_eq!(
            cfg.parse_list::<f64>("sweep", "linf_pct").unwrap(),
            Some(vec![5.0, 10.0, 15.0, 20.0])
        );
    }
}
