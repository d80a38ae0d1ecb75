//! Black-box surrogate capabilities: token log-probabilities, embeddings,
//! mask filling and generation.
//!
//! Every capability has three backings: a remote inference endpoint
//! ([`remote`]), an on-disk newline-delimited cache that wraps any provider
//! ([`cache`]), and an offline deterministic implementation ([`synthetic`])
//! built on a small character n-gram model. The synthetic providers exist so
//! the whole pipeline runs without network access; their scores carry no
//! scientific meaning.

pub mod cache;
pub mod remote;
pub mod synthetic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::transforms::MaskedTemplate;

/// Log-probability and vocabulary rank of one observed token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token_text: String,
    pub logprob: f64,
    /// 1 = most likely token. `None` when the provider exposes no alternatives.
    pub rank: Option<u32>,
    /// Rank is a lower bound (observed token fell outside the returned top-K).
    #[serde(default)]
    pub rank_truncated: bool,
}

impl TokenScore {
    pub fn new(token_text: impl Into<String>, logprob: f64, rank: Option<u32>) -> Self {
        TokenScore {
            token_text: token_text.into(),
            logprob,
            rank,
            rank_truncated: false,
        }
    }
}

/// Who answered a request. Participates in every cache key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderIdentity {
    pub kind: String,
    pub model_name: String,
    pub endpoint: String,
}

impl ProviderIdentity {
    pub fn synthetic(model_name: &str) -> Self {
        ProviderIdentity {
            kind: "synthetic".into(),
            model_name: model_name.into(),
            endpoint: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSupport {
    Exact,
    /// Ranks are clamped to top-K + 1.
    Truncated,
    None,
}

pub trait LogprobProvider: Send + Sync {
    fn identity(&self) -> ProviderIdentity;
    fn rank_support(&self) -> RankSupport;
    fn token_logprobs(&self, text: &str) -> Result<Vec<TokenScore>>;
    fn remote_calls(&self) -> u64 {
        0
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn identity(&self) -> ProviderIdentity;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
    fn remote_calls(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FillOutcome {
    pub text: String,
    /// The configured filler failed and the synthetic fallback was used.
    pub degraded: bool,
}

pub trait MaskFiller: Send + Sync {
    fn identity(&self) -> ProviderIdentity;
    fn fill_masks(&self, template: &MaskedTemplate, seed: u64) -> Result<FillOutcome>;
    fn remote_calls(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: Option<f64>,
    pub seed_hint: Option<u64>,
}

pub trait TextGenerator: Send + Sync {
    fn identity(&self) -> ProviderIdentity;
    fn generate(&self, request: &GenerationRequest) -> Result<String>;
    fn remote_calls(&self) -> u64 {
        0
    }
}

/// The capabilities available to a run. Absent entries fail pre-flight checks
/// for transforms that need them.
#[derive(Clone, Default)]
pub struct ProviderSet {
    pub logprobs: Option<Arc<dyn LogprobProvider>>,
    pub embedding: Option<Arc<dyn EmbeddingProvider>>,
    pub filler: Option<Arc<dyn MaskFiller>>,
    pub generator: Option<Arc<dyn TextGenerator>>,
}

impl ProviderSet {
    /// All four capabilities backed by the bundled reference corpus.
    pub fn synthetic() -> Self {
        let lm = Arc::new(synthetic::CharNgramLm::reference());
        ProviderSet {
            logprobs: Some(Arc::new(synthetic::SyntheticLogprobs::new(lm.clone()))),
            embedding: Some(Arc::new(synthetic::HashedNgramEmbedder::default())),
            filler: Some(Arc::new(synthetic::UnigramFiller::reference())),
            generator: Some(Arc::new(synthetic::SyntheticGenerator::new(lm))),
        }
    }

    pub fn remote_calls(&self) -> u64 {
        self.logprobs.as_ref().map_or(0, |p| p.remote_calls())
            + self.embedding.as_ref().map_or(0, |p| p.remote_calls())
            + self.filler.as_ref().map_or(0, |p| p.remote_calls())
            + self.generator.as_ref().map_or(0, |p| p.remote_calls())
    }

    pub fn identities(&self) -> Vec<(String, ProviderIdentity)> {
        let mut out = Vec::new();
        if let Some(p) = &self.logprobs {
            out.push(("logprobs".to_string(), p.identity()));
        }
        if let Some(p) = &self.embedding {
            out.push(("embedding".to_string(), p.identity()));
        }
        if let Some(p) = &self.filler {
            out.push(("fill".to_string(), p.identity()));
        }
        if let Some(p) = &self.generator {
            out.push(("generation".to_string(), p.identity()));
        }
        out
    }
}

impl std::fmt::Debug for ProviderSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.identities()).finish()
    }
}
