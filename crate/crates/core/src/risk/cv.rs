use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{chance_risk, check_inputs, empirical_risk, optimal_rule, Label, LossSpec, ScoredSample};
use crate::error::{Error, Result};

/// Stratified fold assignment: each class is shuffled under `seed` and dealt
/// round-robin. Samples are ordered by id first, so input order is irrelevant.
pub fn stratified_folds(samples: &[ScoredSample], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; samples.len()];
    for label in [Label::Machine, Label::Human] {
        let mut idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].label == label)
            .collect();
        if idx.len() < folds {
            return Err(Error::InsufficientData(format!(
                "cannot stratify {} {:?} samples into {folds} folds",
                idx.len(),
                label
            )));
        }
        idx.sort_by(|&a, &b| samples[a].sample_id.cmp(&samples[b].sample_id));
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

/// Cross-validated analog of tau-hat. Not clamped: it goes negative when
/// rules fitted on training folds do worse than chance on held-out folds.
pub fn cross_validated_tau(
    samples: &[ScoredSample],
    folds: usize,
    seed: u64,
    pi: f64,
    loss: &LossSpec,
) -> Result<f64> {
    check_inputs(samples, pi, loss)?;
    let assignment = stratified_folds(samples, folds, seed)?;
    cross_validated_tau_with_folds(samples, &assignment, folds, pi, loss)
}

/// Cross-validated tau with an explicit fold index per sample.
pub fn cross_validated_tau_with_folds(
    samples: &[ScoredSample],
    assignment: &[usize],
    folds: usize,
    pi: f64,
    loss: &LossSpec,
) -> Result<f64> {
    check_inputs(samples, pi, loss)?;
    if assignment.len() != samples.len() {
        return Err(Error::InvalidInput(format!(
            "fold assignment has {} entries for {} samples",
            assignment.len(),
            samples.len()
        )));
    }
    let chance = chance_risk(pi, loss);
    if chance <= 0.0 {
        return Err(Error::UndefinedTau { pi });
    }
    let mut total = 0.0;
    for fold in 0..folds {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (s, &f) in samples.iter().zip(assignment) {
            if f == fold {
                test.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
        let (rule, _) = optimal_rule(&train, pi, loss)
            .map_err(|e| Error::InsufficientData(format!("training portion of fold {fold}: {e}")))?;
        total += empirical_risk(&test, &rule, pi, loss)
            .map_err(|e| Error::InsufficientData(format!("held-out fold {fold}: {e}")))?;
    }
    Ok(1.0 - (total / folds as f64) / chance)
}
