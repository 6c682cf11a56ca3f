//! Merged configuration for every subcommand, stored as TOML.
//!
//! Keys may be written flat and dotted (`sim.gutter = 4`) or as tables; both
//! parse to the same value. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::EvalOptions;
use crate::fusion::FusionConfig;
use crate::separator::{CutParams, DEFAULT_CONF_THRESHOLD};
use crate::side_loss::LossHyperparams;
use crate::simulator::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Minimum confidence for writing a crop.
    pub conf_thr: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            conf_thr: DEFAULT_CONF_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub class_agnostic: bool,
    pub area_buckets: bool,
    /// IoU threshold for the recall figure printed next to the AP table.
    pub recall_iou_thr: f64,
}

impl EvalConfig {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            class_agnostic: self.class_agnostic,
            area_buckets: self.area_buckets,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        let opts = EvalOptions::default();
        Self {
            class_agnostic: opts.class_agnostic,
            area_buckets: opts.area_buckets,
            recall_iou_thr: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub cut: CutParams,
    pub fusion: FusionConfig,
    pub loss: LossHyperparams,
    pub eval: EvalConfig,
    pub extract: ExtractConfig,
}

impl ToolConfig {
    pub fn validate(&self) -> Result<()> {
        if i64::try_from(self.seed).is_err() {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        self.sim.validate()?;
        self.cut.validate()?;
        self.fusion.validate()?;
        self.loss.validate()?;
        if !(self.eval.recall_iou_thr > 0.0 && self.eval.recall_iou_thr <= 1.0) {
            return Err(Error::config("eval.recall_iou_thr", "must lie in (0, 1]"));
        }
        if self.extract.conf_thr.is_nan() || self.extract.conf_thr < 0.0 {
            return Err(Error::config("extract.conf_thr", "must be non-negative"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ToolConfig = toml::from_str(text)
            .map_err(|e| Error::config("<config>", e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { key, message } if key == "<config>" => {
                Error::config(path.display().to_string(), message)
            }
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Applies a `dotted.key=value` override; the value uses TOML syntax.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "expected `key=value`"))?;
        let key = key.trim();
        let mut doc: toml::Table = toml::from_str(&self.to_toml_string()).expect("round-trips");
        let parsed: toml::Table = toml::from_str(&format!("v = {}", value.trim()))
            .map_err(|e| Error::config(key, format!("bad value: {e}")))?;
        let value = parsed["v"].clone();

        let mut parts = key.split('.').peekable();
        let mut table = &mut doc;
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                if !table.contains_key(part) {
                    return Err(Error::config(key, "unknown key"));
                }
                table.insert(part.to_string(), value);
                break;
            }
            table = table
                .get_mut(part)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::config(key, "unknown key"))?;
        }
        let updated: ToolConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(key, e.to_string().trim().to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}
