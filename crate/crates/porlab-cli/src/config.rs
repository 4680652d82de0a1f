//! Run configuration: the JSON file format, flag overlay, and the resolved
//! effective settings echoed into every report.

use std::path::{Path, PathBuf};

use porlab::{Error, Result};
use serde::{Deserialize, Serialize};

/// On-disk configuration. Every field is optional so a file can pin just
/// the parts it cares about; command-line flags override file values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub space: Option<String>,
    pub set: Option<String>,
    pub theta: Option<f64>,
    pub c0: Option<f64>,
    pub cover: Option<f64>,
    pub grids: Option<usize>,
    pub depth: Option<u32>,
    pub analyses: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Resolution ladder, coarse to fine, for refinement trends.
    pub ladder: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
    pub balls: Option<usize>,
    pub samples: Option<usize>,
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::input(format!("bad config {}: {e}", path.display())))
}

/// Fully resolved settings for one run. This exact structure is echoed
/// into every report's `config` field, so a report is rerunnable from its
/// own echo.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub space: String,
    pub set: String,
    pub theta: f64,
    pub c0: f64,
    pub cover: f64,
    pub grids: usize,
    pub depth: u32,
    pub analyses: Vec<String>,
    pub seed: u64,
    pub ladder: Vec<f64>,
    pub alpha: f64,
    pub p: f64,
    pub delta: f64,
    pub balls: usize,
    pub samples: usize,
}

impl Default for Effective {
    fn default() -> Self {
        Effective {
            space: String::new(),
            set: "default".to_string(),
            theta: 0.25,
            c0: 1.0,
            cover: 1.0,
            grids: 4,
            depth: 1,
            analyses: vec![
                "dyadic-check".to_string(),
                "holes".to_string(),
                "porosity".to_string(),
            ],
            seed: 0,
            ladder: Vec::new(),
            alpha: 0.5,
            p: 1.0,
            delta: 0.5,
            balls: 64,
            samples: 64,
        }
    }
}

impl Effective {
    /// Layer a config file over the defaults. Flags are applied afterwards
    /// by the command dispatcher.
    pub fn from_file(cfg: &RunConfig) -> Self {
        let mut eff = Effective::default();
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &cfg.$field {
                    eff.$field = v.clone();
                }
            };
        }
        take!(space);
        take!(set);
        take!(theta);
        take!(c0);
        take!(cover);
        take!(grids);
        take!(depth);
        take!(analyses);
        take!(seed);
        take!(ladder);
        take!(alpha);
        take!(p);
        take!(delta);
        take!(balls);
        take!(samples);
        eff
    }

    pub fn require_space(&self) -> Result<&str> {
        if self.space.is_empty() {
            Err(Error::input(
                "no space given: pass --space or set it in the config file",
            ))
        } else {
            Ok(&self.space)
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// Replace (or insert) the `h=` parameter of a space string, for walking a
/// resolution ladder without reparsing the other parameters.
pub fn spec_with_resolution(spec: &str, h: f64) -> Result<String> {
    let (kind, body) = spec
        .split_once(':')
        .ok_or_else(|| Error::input(format!("space spec needs kind:params, got {spec:?}")))?;
    let mut parts: Vec<String> = Vec::new();
    let mut replaced = false;
    for part in body.split(',') {
        let trimmed = part.trim();
        if trimmed.is_empty() {
            continue;
        }
        match trimmed.split_once('=') {
            Some((k, _)) if k.trim().eq_ignore_ascii_case("h") => {
                parts.push(format!("h={h}"));
                replaced = true;
            }
            _ => parts.push(trimmed.to_string()),
        }
    }
    if !replaced {
        parts.push(format!("h={h}"));
    }
    Ok(format!("{kind}:{}", parts.join(",")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults_and_flags_can_override_those() {
        let cfg = RunConfig {
            theta: Some(0.5),
            balls: Some(10),
            ..RunConfig::default()
        };
        let eff = Effective::from_file(&cfg);
        assert_eq!(eff.theta, 0.5);
        assert_eq!(eff.balls, 10);
        assert_eq!(eff.grids, 4);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let bad: std::result::Result<RunConfig, _> =
            serde_json::from_str(r#"{"speling": 1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn resolution_swap_replaces_or_appends() {
        assert_eq!(
            spec_with_resolution("segment:N=4,h=0.25", 0.125).unwrap(),
            "segment:N=4,h=0.125"
        );
        assert_eq!(
            spec_with_resolution("cantor:level=3", 0.0625).unwrap(),
            "cantor:level=3,h=0.0625"
        );
        assert!(spec_with_resolution("nocolon", 0.5).is_err());
    }
}
