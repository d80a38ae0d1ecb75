//! Detector transformations: content to a single scalar score.

mod detectors;
mod knn;
mod mask;
mod scoring;

pub use detectors::{
    detectgpt_discrepancy, detectgpt_transform, likelihood_transform, log_of_rank_transform,
    logrank_transform, perturb, proxihuman_transform, sequence_logprob, Perturbation,
};
pub use knn::{dissimilarity, knn_mean_distance};
pub use mask::{mask_spans, tokenize, MaskedTemplate};
pub use scoring::{check_capabilities, score_corpus, score_record, ScoreOutcome, ScoringOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    #[serde(rename = "likelihood")]
    Likelihood,
    /// Mean vocabulary rank of the observed tokens.
    #[serde(rename = "logrank")]
    LogRank,
    /// Mean of ln(rank); the variant used by earlier rank-based detectors.
    #[serde(rename = "log_of_rank")]
    LogOfRank,
    #[serde(rename = "detectgpt")]
    DetectGpt,
    #[serde(rename = "proxihuman")]
    ProxiHuman,
}

impl TransformKind {
    pub fn display_name(self) -> &'static str {
        match self {
            TransformKind::Likelihood => "Likelihood",
            TransformKind::LogRank => "LogRank",
            TransformKind::LogOfRank => "LogOfRank",
            TransformKind::DetectGpt => "DetectGPT",
            TransformKind::ProxiHuman => "ProxiHuman",
        }
    }

    pub fn needs_logprobs(self) -> bool {
        !matches!(self, TransformKind::ProxiHuman)
    }

    pub fn needs_ranks(self) -> bool {
        matches!(self, TransformKind::LogRank | TransformKind::LogOfRank)
    }

    pub fn needs_perturbations(self) -> bool {
        matches!(self, TransformKind::DetectGpt | TransformKind::ProxiHuman)
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, TransformKind::ProxiHuman)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    CosineDistance,
}

fn default_n_q() -> usize {
    20
}
fn default_mask_rate() -> f64 {
    0.10
}
fn default_k() -> usize {
    5
}
fn default_metric() -> Metric {
    Metric::CosineDistance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    /// Perturbations per sample (DetectGPT, ProxiHuman).
    #[serde(default = "default_n_q")]
    pub n_q: usize,
    #[serde(default = "default_mask_rate")]
    pub mask_rate: f64,
    /// Nearest perturbed neighbours averaged by ProxiHuman.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default)]
    pub seed: u64,
    /// Accept ranks clamped at top-K + 1 by remote providers.
    #[serde(default)]
    pub allow_truncated_ranks: bool,
    /// DetectGPT: report |discrepancy| instead of the signed value.
    #[serde(default)]
    pub absolute: bool,
}

impl TransformSpec {
    pub fn new(kind: TransformKind) -> Self {
        TransformSpec {
            kind,
            n_q: default_n_q(),
            mask_rate: default_mask_rate(),
            k: default_k(),
            metric: default_metric(),
            seed: 0,
            allow_truncated_ranks: false,
            absolute: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_perturbations(mut self, n_q: usize) -> Self {
        self.n_q = n_q;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn name(&self) -> &'static str {
        self.kind.display_name()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::InvalidInput(format!(
                "mask_rate must lie in (0, 1), got {}",
                self.mask_rate
            )));
        }
        if self.kind.needs_perturbations() && self.n_q == 0 {
            return Err(Error::InvalidInput("n_q must be at least 1".into()));
        }
        if self.kind == TransformKind::ProxiHuman && (self.k == 0 || self.k > self.n_q) {
            return Err(Error::InvalidInput(format!(
                "k must satisfy 1 <= k <= n_q, got k={} n_q={}",
                self.k, self.n_q
            )));
        }
        Ok(())
    }
}
