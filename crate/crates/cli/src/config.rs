//! Run configuration: a JSON file whose keys can each be overridden by a
//! command-line flag. Every key is optional in the file; defaults are
//! filled in by [`RunConfig::resolve`].

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use grouprec::eval::DEFAULT_KS;
use grouprec::model::ViewMask;
use grouprec::{Format, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "GROUPREC_SEED";
pub const DEFAULT_N_NEG_EVAL: usize = 100;
pub const EFFECTIVE_CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_neg_train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<ViewMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_self_loops: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_neg_eval: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Loads `path` if given, otherwise starts empty.
    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Keys set in `top` win over keys set in `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay_fields!(base, top; data, format, output, dim, layers, n_neg_train, lr, adam_beta1,
            adam_beta2, adam_eps, epochs, seed, eval_every, patience, views, group_self_loops, ks, n_neg_eval)
    }

    /// Falls back to the seed environment variable when no seed is set.
    pub fn with_env_seed(mut self) -> Result<Self, CliError> {
        if self.seed.is_none() {
            if let Ok(raw) = env::var(SEED_ENV) {
                let seed = raw
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
                self.seed = Some(seed);
            }
        }
        Ok(self)
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            dim: self.dim.unwrap_or(d.dim),
            layers: self.layers.unwrap_or(d.layers),
            n_neg_train: self.n_neg_train.unwrap_or(d.n_neg_train),
            lr: self.lr.unwrap_or(d.lr),
            adam_beta1: self.adam_beta1.unwrap_or(d.adam_beta1),
            adam_beta2: self.adam_beta2.unwrap_or(d.adam_beta2),
            adam_eps: self.adam_eps.unwrap_or(d.adam_eps),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.seed.unwrap_or(d.seed),
            eval_every: self.eval_every.unwrap_or(d.eval_every),
            patience: self.patience.or(d.patience),
            views: self.views.unwrap_or(d.views),
            group_self_loops: self.group_self_loops.unwrap_or(d.group_self_loops),
        }
    }

    pub fn ks(&self) -> Vec<usize> {
        self.ks.clone().unwrap_or_else(|| DEFAULT_KS.to_vec())
    }

    pub fn n_neg_eval(&self) -> usize {
        self.n_neg_eval.unwrap_or(DEFAULT_N_NEG_EVAL)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn require_data(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Usage("no data directory given (use --data or the `data` key)".into()))
    }

    /// Checks every invariant that does not need the dataset.
    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config().validate()?;
        let ks = self.ks();
        if ks.is_empty() || ks.contains(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Usage(format!("ks must be non-empty, positive and ascending, got {ks:?}")));
        }
        if self.n_neg_eval() == 0 {
            return Err(CliError::Usage("n_neg_eval must be at least 1".into()));
        }
        Ok(())
    }

    /// The same configuration with every default written out.
    pub fn effective(&self) -> RunConfig {
        let t = self.train_config();
        RunConfig {
            data: self.data.clone(),
            format: Some(self.format()),
            output: self.output.clone(),
            dim: Some(t.dim),
            layers: Some(t.layers),
            n_neg_train: Some(t.n_neg_train),
            lr: Some(t.lr),
            adam_beta1: Some(t.adam_beta1),
            adam_beta2: Some(t.adam_beta2),
            adam_eps: Some(t.adam_eps),
            epochs: Some(t.epochs),
            seed: Some(t.seed),
            eval_every: Some(t.eval_every),
            patience: t.patience,
            views: Some(t.views),
            group_self_loops: Some(t.group_self_loops),
            ks: Some(self.ks()),
            n_neg_eval: Some(self.n_neg_eval()),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, json + "\n").map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
