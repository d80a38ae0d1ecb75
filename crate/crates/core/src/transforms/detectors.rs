use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{knn_mean_distance, mask_spans, tokenize, TransformKind, TransformSpec};
use crate::error::{Error, Result};
use crate::providers::{EmbeddingProvider, LogprobProvider, MaskFiller, TokenScore};
use crate::seed::derive_indexed;

fn require_nonempty(scores: &[TokenScore]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no token scores to aggregate".into()));
    }
    if let Some(t) = scores.iter().find(|t| !t.logprob.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "token `{}` has non-finite logprob {}",
            t.token_text, t.logprob
        )));
    }
    Ok(())
}

/// Mean per-token log-probability.
pub fn likelihood_transform(scores: &[TokenScore]) -> Result<f64> {
    require_nonempty(scores)?;
    Ok(scores.iter().map(|t| t.logprob).sum::<f64>() / scores.len() as f64)
}

/// Total log-probability of the sequence.
pub fn sequence_logprob(scores: &[TokenScore]) -> Result<f64> {
    require_nonempty(scores)?;
    Ok(scores.iter().map(|t| t.logprob).sum())
}

fn ranks(scores: &[TokenScore], allow_truncated: bool) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no token scores to aggregate".into()));
    }
    scores
        .iter()
        .map(|t| match t.rank {
            None => Err(Error::Capability(format!(
                "rank unknown for token `{}`; the provider returned no alternatives",
                t.token_text
            ))),
            Some(_) if t.rank_truncated && !allow_truncated => Err(Error::Capability(format!(
                "rank for token `{}` is truncated; set allow_truncated_ranks to accept it",
                t.token_text
            ))),
            Some(0) => Err(Error::InvalidInput("ranks start at 1".into())),
            Some(r) => Ok(r as f64),
        })
        .collect()
}

/// Mean vocabulary rank of the observed tokens (1 = most likely).
pub fn logrank_transform(scores: &[TokenScore], allow_truncated: bool) -> Result<f64> {
    let r = ranks(scores, allow_truncated)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// Mean natural log of the vocabulary rank.
pub fn log_of_rank_transform(scores: &[TokenScore], allow_truncated: bool) -> Result<f64> {
    let r = ranks(scores, allow_truncated)?;
    Ok(r.iter().map(|x| x.ln()).sum::<f64>() / r.len() as f64)
}

/// `original - mean(perturbed)`; the score is signed, orientation is left to the risk engine.
pub fn detectgpt_discrepancy(original: f64, perturbed: &[f64]) -> Result<f64> {
    if perturbed.is_empty() {
        return Err(Error::InvalidInput("need at least one perturbation".into()));
    }
    Ok(original - perturbed.iter().sum::<f64>() / perturbed.len() as f64)
}

/// One mask-and-fill rewrite of a text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub index: usize,
    pub seed: u64,
    pub masked_positions: Vec<usize>,
    pub text: String,
    pub degraded: bool,
}

/// `spec.n_q` perturbations; the i-th uses a seed derived from `seed` and `i`,
/// so results do not depend on scheduling.
pub fn perturb(content: &str, filler: &dyn MaskFiller, spec: &TransformSpec, seed: u64) -> Result<Vec<Perturbation>> {
    let tokens = tokenize(content);
    (0..spec.n_q)
        .into_par_iter()
        .map(|index| {
            let s = derive_indexed(seed, index);
            let template = mask_spans(&tokens, spec.mask_rate, s)?;
            let filled = filler.fill_masks(&template, s)?;
            Ok(Perturbation {
                index,
                seed: s,
                masked_positions: template.positions.clone(),
                text: filled.text,
                degraded: filled.degraded,
            })
        })
        .collect()
}

fn perturb_texts(content: &str, filler: &dyn MaskFiller, spec: &TransformSpec, seed: u64) -> Result<Vec<String>> {
    Ok(perturb(content, filler, spec, seed)?.into_iter().map(|p| p.text).collect())
}

/// Log-likelihood discrepancy between the content and its mask-and-fill perturbations.
pub fn detectgpt_transform(
    content: &str,
    logprobs: &dyn LogprobProvider,
    filler: &dyn MaskFiller,
    spec: &TransformSpec,
    seed: u64,
) -> Result<f64> {
    if spec.kind != TransformKind::DetectGpt {
        return Err(Error::InvalidInput(format!("spec kind is {:?}, not DetectGPT", spec.kind)));
    }
    spec.validate()?;
    let original = sequence_logprob(&logprobs.token_logprobs(content)?)?;
    let perturbed = perturb_texts(content, filler, spec, seed)?;
    let normalized = tokenize(content).join(" ");
    if perturbed.iter().all(|p| *p == normalized) {
        log::warn!("all {} perturbations equal the original; scoring 0", spec.n_q);
        return Ok(0.0);
    }
    let lls = perturbed
        .par_iter()
        .map(|p| sequence_logprob(&logprobs.token_logprobs(p)?))
        .collect::<Result<Vec<f64>>>()?;
    let d = detectgpt_discrepancy(original, &lls)?;
    Ok(if spec.absolute { d.abs() } else { d })
}

/// Mean distance from the content's embedding to its k nearest perturbed embeddings.
pub fn proxihuman_transform(
    content: &str,
    embedder: &dyn EmbeddingProvider,
    filler: &dyn MaskFiller,
    spec: &TransformSpec,
    seed: u64,
) -> Result<f64> {
    if spec.kind != TransformKind::ProxiHuman {
        return Err(Error::InvalidInput(format!("spec kind is {:?}, not ProxiHuman", spec.kind)));
    }
    spec.validate()?;
    let y = embedder.embed(content)?;
    let perturbed = perturb_texts(content, filler, spec, seed)?;
    let ys = perturbed
        .par_iter()
        .map(|p| embedder.embed(p))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    knn_mean_distance(&y, &ys, spec.k, spec.metric)
}
