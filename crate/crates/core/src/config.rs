//! Line-based `key=value` run configuration.
//!
//! Defaults carry the published constants: adversarial weight 0.01, ratio
//! bounds 1% / 80%, ratio buckets at 5% and 15%.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::metrics::BucketEdges;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {value:?} ({reason})")]
    Invalid { key: String, value: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 picks the number of available cores.
    pub workers: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub hue_threshold_deg: f64,
    pub hue_min_saturation: f64,
    pub clip_threshold: f64,
    pub split_fraction: f64,
    pub composites_per_target: usize,
    pub fecker_bins: usize,
    pub pitie_iters: usize,
    pub bucket_edges: BucketEdges,
    pub lambda: f64,
    pub bt_max_iters: usize,
    pub bt_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            ratio_min: 0.01,
            ratio_max: 0.80,
            hue_threshold_deg: 60.0,
            hue_min_saturation: 0.1,
            clip_threshold: 0.10,
            split_fraction: 0.8,
            composites_per_target: 4,
            fecker_bins: 256,
            pitie_iters: 10,
            bucket_edges: BucketEdges::default(),
            lambda: 0.01,
            bt_max_iters: 10_000,
            bt_tol: 1e-10,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::Invalid {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: n + 1, text: raw.into() })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::default();
        cfg.apply(&parse_kv(&text)?)?;
        Ok(cfg)
    }

    /// Override fields from a key/value map, then validate.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (k, v) in kv {
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "ratio_min" => self.ratio_min = parse(key, value)?,
            "ratio_max" => self.ratio_max = parse(key, value)?,
            "hue_threshold_deg" => self.hue_threshold_deg = parse(key, value)?,
            "hue_min_saturation" => self.hue_min_saturation = parse(key, value)?,
            "clip_threshold" => self.clip_threshold = parse(key, value)?,
            "split_fraction" => self.split_fraction = parse(key, value)?,
            "composites_per_target" => self.composites_per_target = parse(key, value)?,
            "fecker_bins" => self.fecker_bins = parse(key, value)?,
            "pitie_iters" => self.pitie_iters = parse(key, value)?,
            "bucket_edges" => {
                self.bucket_edges = value.parse().map_err(|e: crate::metrics::MetricsError| ConfigError::Invalid {
                    key: key.into(),
                    value: value.into(),
                    reason: e.to_string(),
                })?
            }
            "lambda" => self.lambda = parse(key, value)?,
            "bt_max_iters" => self.bt_max_iters = parse(key, value)?,
            "bt_tol" => self.bt_tol = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| {
            Err(ConfigError::Invalid { key: key.into(), value, reason: reason.into() })
        };
        if !(0.0..1.0).contains(&self.ratio_min) || !(self.ratio_min < self.ratio_max && self.ratio_max <= 1.0) {
            return bad("ratio_min/ratio_max", format!("{}/{}", self.ratio_min, self.ratio_max), "need 0 <= min < max <= 1");
        }
        if !(0.0..=1.0).contains(&self.split_fraction) {
            return bad("split_fraction", self.split_fraction.to_string(), "must lie in [0, 1]");
        }
        if !(0.0..=180.0).contains(&self.hue_threshold_deg) {
            return bad("hue_threshold_deg", self.hue_threshold_deg.to_string(), "must lie in [0, 180]");
        }
        if !(0.0..=1.0).contains(&self.clip_threshold) {
            return bad("clip_threshold", self.clip_threshold.to_string(), "must lie in [0, 1]");
        }
        if !(64..=65536).contains(&self.fecker_bins) {
            return bad("fecker_bins", self.fecker_bins.to_string(), "must lie in [64, 65536]");
        }
        if self.pitie_iters == 0 {
            return bad("pitie_iters", "0".into(), "must be >= 1");
        }
        if self.composites_per_target == 0 {
            return bad("composites_per_target", "0".into(), "must be >= 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", self.lambda.to_string(), "must be finite and >= 0");
        }
        if !(self.bt_tol > 0.0) || self.bt_max_iters == 0 {
            return bad("bt_tol/bt_max_iters", format!("{}/{}", self.bt_tol, self.bt_max_iters), "must be positive");
        }
        Ok(())
    }

    /// Effective configuration in `key=value` form, keys sorted. `workers`
    /// is omitted since it never changes results.
    pub fn snapshot(&self) -> String {
        let mut kv = BTreeMap::new();
        kv.insert("seed", self.seed.to_string());
        kv.insert("ratio_min", self.ratio_min.to_string());
        kv.insert("ratio_max", self.ratio_max.to_string());
        kv.insert("hue_threshold_deg", self.hue_threshold_deg.to_string());
        kv.insert("hue_min_saturation", self.hue_min_saturation.to_string());
        kv.insert("clip_threshold", self.clip_threshold.to_string());
        kv.insert("split_fraction", self.split_fraction.to_string());
        kv.insert("composites_per_target", self.composites_per_target.to_string());
        kv.insert("fecker_bins", self.fecker_bins.to_string());
        kv.insert("pitie_iters", self.pitie_iters.to_string());
        kv.insert("bucket_edges", self.bucket_edges.to_string());
        kv.insert("lambda", self.lambda.to_string());
        kv.insert("bt_max_iters", self.bt_max_iters.to_string());
        kv.insert("bt_tol", self.bt_tol.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}
