use std::sync::Arc;

use rayon::prelude::*;

use super::{
    detectgpt_transform, likelihood_transform, log_of_rank_transform, logrank_transform,
    proxihuman_transform, TransformKind, TransformSpec,
};
use crate::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::providers::{ProviderSet, RankSupport};
use crate::risk::ScoredSample;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringOptions {
    pub concurrency: usize,
    /// Largest tolerated fraction of failed samples.
    pub failure_limit: f64,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            concurrency: 1,
            failure_limit: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    /// Sorted by sample id.
    pub samples: Vec<ScoredSample>,
    pub failures: Vec<(String, String)>,
}

fn missing(what: &str, spec: &TransformSpec) -> Error {
    Error::Capability(format!("{} needs a {what} provider", spec.kind.display_name()))
}

/// Fail before any provider call when the configured providers cannot supply the transform.
pub fn check_capabilities(spec: &TransformSpec, providers: &ProviderSet) -> Result<()> {
    spec.validate()?;
    let k = spec.kind;
    if k.needs_logprobs() {
        let lp = providers.logprobs.as_ref().ok_or_else(|| missing("logprob", spec))?;
        if k.needs_ranks() {
            match lp.rank_support() {
                RankSupport::Exact => {}
                RankSupport::Truncated if spec.allow_truncated_ranks => {}
                RankSupport::Truncated => {
                    return Err(Error::Capability(format!(
                        "{} needs exact ranks; the provider only returns top-K (set allow_truncated_ranks)",
                        k.display_name()
                    )))
                }
                RankSupport::None => {
                    return Err(Error::Capability(format!(
                        "{} needs token ranks; the provider `{}` exposes none",
                        k.display_name(),
                        lp.identity().model_name
                    )))
                }
            }
        }
    }
    if k.needs_perturbations() && providers.filler.is_none() {
        return Err(missing("mask-fill", spec));
    }
    if k.needs_embeddings() && providers.embedding.is_none() {
        return Err(missing("embedding", spec));
    }
    Ok(())
}

fn need<T: ?Sized>(p: &Option<Arc<T>>, what: &str, spec: &TransformSpec) -> Result<Arc<T>> {
    p.clone().ok_or_else(|| missing(what, spec))
}

/// Score one record; perturbation seeds derive from the transform seed and the record id.
pub fn score_record(record: &CorpusRecord, spec: &TransformSpec, providers: &ProviderSet) -> Result<f64> {
    let seed = derive_seed(spec.seed, &record.id);
    let text = record.text.as_str();
    let score = match spec.kind {
        TransformKind::Likelihood => {
            likelihood_transform(&need(&providers.logprobs, "logprob", spec)?.token_logprobs(text)?)?
        }
        TransformKind::LogRank => logrank_transform(
            &need(&providers.logprobs, "logprob", spec)?.token_logprobs(text)?,
            spec.allow_truncated_ranks,
        )?,
        TransformKind::LogOfRank => log_of_rank_transform(
            &need(&providers.logprobs, "logprob", spec)?.token_logprobs(text)?,
            spec.allow_truncated_ranks,
        )?,
        TransformKind::DetectGpt => detectgpt_transform(
            text,
            need(&providers.logprobs, "logprob", spec)?.as_ref(),
            need(&providers.filler, "mask-fill", spec)?.as_ref(),
            spec,
            seed,
        )?,
        TransformKind::ProxiHuman => proxihuman_transform(
            text,
            need(&providers.embedding, "embedding", spec)?.as_ref(),
            need(&providers.filler, "mask-fill", spec)?.as_ref(),
            spec,
            seed,
        )?,
    };
    if !score.is_finite() {
        return Err(Error::InvalidInput(format!("record `{}` scored {score}", record.id)));
    }
    Ok(score)
}

/// Score every record on a pool of `concurrency` workers. Output order and
/// values do not depend on the worker count.
pub fn score_corpus(
    records: &[CorpusRecord],
    spec: &TransformSpec,
    providers: &ProviderSet,
    opts: ScoringOptions,
) -> Result<ScoreOutcome> {
    check_capabilities(spec, providers)?;
    if opts.concurrency == 0 {
        return Err(Error::InvalidInput("concurrency must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency)
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let results: Vec<(usize, Result<f64>)> = pool.install(|| {
        records
            .par_iter()
            .enumerate()
            .map(|(i, r)| (i, score_record(r, spec, providers)))
            .collect()
    });
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (i, res) in results {
        let r = &records[i];
        match res {
            Ok(score) => samples.push(ScoredSample::new(r.id.clone(), r.label, score)),
            Err(Error::Capability(m)) => return Err(Error::Capability(m)),
            Err(e) => {
                log::warn!("sample `{}` failed: {e}", r.id);
                failures.push((r.id.clone(), e.to_string()));
            }
        }
    }
    if !records.is_empty() && failures.len() as f64 > opts.failure_limit * records.len() as f64 {
        return Err(Error::FailureLimit {
            failed: failures.len(),
            total: records.len(),
            limit: opts.failure_limit,
            failures,
        });
    }
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    failures.sort();
    Ok(ScoreOutcome { samples, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::Label;

    fn corpus() -> Vec<CorpusRecord> {
        (0..12)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Human } else { Label::Machine };
                CorpusRecord::new(
                    format!("r{i:02}"),
                    format!("the river runs past the mill and record {i} ends with a quiet line"),
                    label,
                    "c",
                )
            })
            .collect()
    }

    #[test]
    fn concurrency_does_not_change_scores() {
        let providers = ProviderSet::synthetic();
        for kind in [TransformKind::Likelihood, TransformKind::DetectGpt, TransformKind::ProxiHuman] {
            let spec = TransformSpec::new(kind).with_perturbations(6).with_k(3);
            let one = score_corpus(&corpus(), &spec, &providers, ScoringOptions { concurrency: 1, failure_limit: 0.0 }).unwrap();
            let eight = score_corpus(&corpus(), &spec, &providers, ScoringOptions { concurrency: 8, failure_limit: 0.0 }).unwrap();
            assert_eq!(one, eight);
        }
    }

    #[test]
    fn missing_provider_fails_preflight() {
        let mut providers = ProviderSet::synthetic();
        providers.embedding = None;
        let spec = TransformSpec::new(TransformKind::ProxiHuman);
        assert!(matches!(check_capabilities(&spec, &providers), Err(Error::Capability(_))));
        providers.logprobs = None;
        assert!(check_capabilities(&TransformSpec::new(TransformKind::Likelihood), &providers).is_err());
    }

    #[test]
    fn failure_limit_enforced() {
        let mut records = corpus();
        records[0].text = "single".into();
        let spec = TransformSpec::new(TransformKind::DetectGpt).with_perturbations(2);
        let providers = ProviderSet::synthetic();
        let strict = score_corpus(&records, &spec, &providers, ScoringOptions::default());
        assert!(matches!(strict, Err(Error::FailureLimit { failed: 1, .. })));
        let lenient = score_corpus(&records, &spec, &providers, ScoringOptions { concurrency: 2, failure_limit: 0.1 }).unwrap();
        assert_eq!(lenient.failures.len(), 1);
        assert_eq!(lenient.samples.len(), 11);
    }
}
