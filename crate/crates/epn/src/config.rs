//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use epn_core::{Algorithm, ChildOrder, NsMode, QueryConfig, ReplayConfig};
use serde::{Deserialize, Serialize};

use crate::driver::{BuildConfig, DEFAULT_PERIOD, DEFAULT_STORE_CAPACITY};
use crate::error::{Error, Result};
use crate::ingest::InputFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    Es,
    Rset,
    #[default]
    Both,
}

impl AlgorithmChoice {
    pub fn algorithms(self) -> Vec<Algorithm> {
        match self {
            AlgorithmChoice::Es => vec![Algorithm::Es],
            AlgorithmChoice::Rset => vec![Algorithm::Rset],
            AlgorithmChoice::Both => Algorithm::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NsChoice {
    /// Number of stored samples.
    #[default]
    Samples,
    /// Number of event instances seen.
    Events,
}

impl From<NsChoice> for NsMode {
    fn from(c: NsChoice) -> Self {
        match c {
            NsChoice::Samples => NsMode::Samples,
            NsChoice::Events => NsMode::EventInstances,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ChildOrderChoice {
    #[default]
    Id,
    Probability,
}

impl From<ChildOrderChoice> for ChildOrder {
    fn from(c: ChildOrderChoice) -> Self {
        match c {
            ChildOrderChoice::Id => ChildOrder::TypeId,
            ChildOrderChoice::Probability => ChildOrder::ProbabilityDesc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub window_period: f64,
    pub k: usize,
    /// k sweep for `evaluate`; picked from the type count when absent.
    pub ks: Option<Vec<usize>>,
    pub alpha: f64,
    pub store_capacity: usize,
    pub cond_cap: usize,
    pub ns_mode: NsChoice,
    pub algorithm: AlgorithmChoice,
    pub child_order: ChildOrderChoice,
    pub seed: u64,
    pub train_fraction: f64,
    pub max_delta: u32,
    pub format: InputFormat,
    /// Accuracy-only multi-threaded evaluation.
    pub parallel: bool,
    pub memoize: bool,
    pub output: Option<PathBuf>,
    pub store_output: Option<PathBuf>,
    pub report_csv: Option<PathBuf>,
    pub report_json: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            window_period: DEFAULT_PERIOD,
            k: 5,
            ks: None,
            alpha: epn_core::citest::DEFAULT_ALPHA,
            store_capacity: DEFAULT_STORE_CAPACITY,
            cond_cap: epn_core::query::DEFAULT_COND_CAP,
            ns_mode: NsChoice::Samples,
            algorithm: AlgorithmChoice::Both,
            child_order: ChildOrderChoice::Id,
            seed: 0,
            train_fraction: 0.7,
            max_delta: 20,
            format: InputFormat::Auto,
            parallel: false,
            memoize: true,
            output: None,
            store_output: None,
            report_csv: None,
            report_json: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_owned()));
        if !(self.window_period.is_finite() && self.window_period > 0.0) {
            return bad("window_period must be positive");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if let Some(ks) = &self.ks {
            if ks.is_empty() || ks.contains(&0) {
                return bad("ks must be a non-empty list of positive values");
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.store_capacity == 0 {
            return bad("store_capacity must be positive");
        }
        if self.cond_cap == 0 {
            return bad("cond_cap must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if self.max_delta == 0 {
            return bad("max_delta must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            period: self.window_period,
            store_capacity: self.store_capacity,
        }
    }

    pub fn query_config(&self) -> QueryConfig {
        QueryConfig {
            k: self.k,
            cond_cap: self.cond_cap,
            child_order: self.child_order.into(),
        }
    }

    pub fn replay_config(&self, n_types: usize) -> ReplayConfig {
        ReplayConfig {
            algorithms: self.algorithm.algorithms(),
            ks: self
                .ks
                .clone()
                .unwrap_or_else(|| epn_core::default_ks(n_types)),
            max_delta: self.max_delta,
            query: self.query_config(),
            memoize: self.memoize,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("alpha = 0.99\nalgorithm = \"rset\"\nks = [1, 2]\n").unwrap();
        assert_eq!(c.alpha, 0.99);
        assert_eq!(c.algorithm, AlgorithmChoice::Rset);
        assert_eq!(c.window_period, DEFAULT_PERIOD);
        assert_eq!(c.replay_config(17).ks, [1, 2]);
        assert!(toml::from_str::<RunConfig>("alpah = 1").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let c = RunConfig { k: 0, ..Default::default() };
        assert!(c.validate().is_err());
        assert_eq!(RunConfig::default().replay_config(100).ks, [1, 5, 10, 15, 20]);
    }
}
