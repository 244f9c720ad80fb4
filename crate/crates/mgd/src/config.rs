//! Pipeline configuration and its flat `key = value` file format.

use crate::mfe::FusionMode;
use crate::trajfilter::MetricMode;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("line {line}: expected `key = value`")]
    BadSyntax { line: usize },
    #[error("{key}: {message}")]
    OutOfRange { key: String, message: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Every pipeline tunable. Config-file keys are exactly these field names.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Differencing stride: the current frame is compared against frames
    /// k before and k after.
    pub k: u64,
    pub diff_threshold: u8,
    pub fusion: FusionMode,
    pub morph_iterations: usize,
    pub min_blob_area: usize,
    pub grid_cols: u32,
    pub grid_rows: u32,
    pub lk_levels: usize,
    pub lk_window: usize,
    pub lk_max_iters: usize,
    pub lk_epsilon: f64,
    pub ransac_reproj_threshold: f64,
    pub ransac_confidence: f64,
    pub ransac_max_iters: usize,
    pub ransac_seed: u64,
    pub iou_gate: f64,
    pub max_age: u64,
    pub min_hits: u64,
    pub history_capacity: usize,
    pub tau_d: f64,
    pub metric_mode: MetricMode,
    pub lac_threshold: f64,
    pub lad_crop: u32,
    pub lad_conf: f64,
    pub enable_tf: bool,
    pub enable_lac: bool,
    pub enable_lad: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 1,
            diff_threshold: 5,
            fusion: FusionMode::ThreeFrameOr,
            morph_iterations: 1,
            min_blob_area: 15,
            grid_cols: 30,
            grid_rows: 20,
            lk_levels: 3,
            lk_window: 21,
            lk_max_iters: 30,
            lk_epsilon: 0.01,
            ransac_reproj_threshold: 3.0,
            ransac_confidence: 0.995,
            ransac_max_iters: 2000,
            ransac_seed: 0,
            iou_gate: 0.3,
            max_age: 3,
            min_hits: 1,
            history_capacity: 16,
            tau_d: 0.5,
            metric_mode: MetricMode::Enclosing,
            lac_threshold: 0.5,
            lad_crop: 320,
            lad_conf: 0.5,
            enable_tf: true,
            enable_lac: true,
            enable_lad: true,
        }
    }
}

impl std::str::FromStr for MetricMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enclosing" => Ok(MetricMode::Enclosing),
            "self_diag" => Ok(MetricMode::SelfDiag),
            other => Err(format!("unknown metric mode `{other}`")),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |ok: bool, key: &str, message: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { key: key.into(), message: message.into() })
            }
        };
        range(self.k >= 1, "k", "stride must be at least 1")?;
        range(self.morph_iterations >= 1, "morph_iterations", "must be at least 1")?;
        range(self.grid_cols >= 2 && self.grid_rows >= 2, "grid_cols", "grid must be at least 2x2")?;
        range(self.lk_levels >= 1, "lk_levels", "need at least one pyramid level")?;
        range(
            self.lk_window >= 3 && self.lk_window % 2 == 1,
            "lk_window",
            "window must be odd and at least 3",
        )?;
        range(self.lk_epsilon > 0.0, "lk_epsilon", "must be positive")?;
        range(
            self.ransac_reproj_threshold > 0.0,
            "ransac_reproj_threshold",
            "must be positive",
        )?;
        range(
            self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0,
            "ransac_confidence",
            "must be in (0, 1)",
        )?;
        range(self.ransac_max_iters >= 1, "ransac_max_iters", "must be at least 1")?;
        range(
            (0.0..=1.0).contains(&self.iou_gate),
            "iou_gate",
            "must be in [0, 1]",
        )?;
        range(self.history_capacity >= 4, "history_capacity", "trajectory lookback needs 4")?;
        range(self.tau_d >= 0.0, "tau_d", "must be non-negative")?;
        range(
            (0.0..=1.0).contains(&self.lac_threshold),
            "lac_threshold",
            "must be in [0, 1]",
        )?;
        range(self.lad_crop >= 32, "lad_crop", "search window below 32 px is useless")?;
        range((0.0..=1.0).contains(&self.lad_conf), "lad_conf", "must be in [0, 1]")?;
        Ok(())
    }

    /// Parse the flat `key = value` format. Blank lines and lines starting
    /// with `#` are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (line_no, raw) in text.lines().enumerate() {
            let line_no = line_no + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or(ConfigError::BadSyntax { line: line_no })?;
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::BadSyntax { line: line_no });
            }
            cfg.apply(key, value, line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(
            key: &str,
            value: &str,
            line: usize,
        ) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                line,
                key: key.into(),
                message: e.to_string(),
            })
        }
        match key {
            "k" => self.k = parse(key, value, line)?,
            "diff_threshold" => self.diff_threshold = parse(key, value, line)?,
            "fusion" => self.fusion = parse(key, value, line)?,
            "morph_iterations" => self.morph_iterations = parse(key, value, line)?,
            "min_blob_area" => self.min_blob_area = parse(key, value, line)?,
            "grid_cols" => self.grid_cols = parse(key, value, line)?,
            "grid_rows" => self.grid_rows = parse(key, value, line)?,
            "lk_levels" => self.lk_levels = parse(key, value, line)?,
            "lk_window" => self.lk_window = parse(key, value, line)?,
            "lk_max_iters" => self.lk_max_iters = parse(key, value, line)?,
            "lk_epsilon" => self.lk_epsilon = parse(key, value, line)?,
            "ransac_reproj_threshold" => self.ransac_reproj_threshold = parse(key, value, line)?,
            "ransac_confidence" => self.ransac_confidence = parse(key, value, line)?,
            "ransac_max_iters" => self.ransac_max_iters = parse(key, value, line)?,
            "ransac_seed" => self.ransac_seed = parse(key, value, line)?,
            "iou_gate" => self.iou_gate = parse(key, value, line)?,
            "max_age" => self.max_age = parse(key, value, line)?,
            "min_hits" => self.min_hits = parse(key, value, line)?,
            "history_capacity" => self.history_capacity = parse(key, value, line)?,
            "tau_d" => self.tau_d = parse(key, value, line)?,
            "metric_mode" => self.metric_mode = parse(key, value, line)?,
            "lac_threshold" => self.lac_threshold = parse(key, value, line)?,
            "lad_crop" => self.lad_crop = parse(key, value, line)?,
            "lad_conf" => self.lad_conf = parse(key, value, line)?,
            "enable_tf" => self.enable_tf = parse(key, value, line)?,
            "enable_lac" => self.enable_lac = parse(key, value, line)?,
            "enable_lad" => self.enable_lad = parse(key, value, line)?,
            other => {
                return Err(ConfigError::UnknownKey { line, key: other.into() });
            }
        }
        Ok(())
    }
}
