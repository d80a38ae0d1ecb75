//! Risk engine for the scalar-threshold family.
//!
//! Empirical risks are computed from class-conditional error rates weighted by
//! the context's prior and loss, so a corpus need not be sampled at the
//! context's `pi`:
//!
//! ```text
//! R(h) = pi * beta * e0 + (1 - pi) * alpha * e1
//! ```
//!
//! where `e0` is the fraction of machine samples called human and `e1` the
//! fraction of human samples called machine. The chance-level rule predicts
//! machine with probability `pi` regardless of input and has risk
//! `pi * (1 - pi) * (alpha + beta)`.

mod cv;
mod types;

pub use cv::{cross_validated_tau, cross_validated_tau_with_folds, stratified_folds};
pub use types::{
    classify, extended_real, DecisionRule, HumanDetectionContext, Label, LossSpec, Orientation,
    RiskCurve, RiskPoint, ScoredSample, TauReport, SCALAR_THRESHOLD_FAMILY,
};

pub(crate) use types::validate_pi;

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Canonical weights `(pi * beta, (1 - pi) * alpha)`.
///
/// Empirical risk depends on `(pi, loss)` only through this pair.
pub fn duality_canonical(pi: f64, loss: &LossSpec) -> (f64, f64) {
    (pi * loss.beta, (1.0 - pi) * loss.alpha)
}

pub fn chance_risk(pi: f64, loss: &LossSpec) -> f64 {
    pi * (1.0 - pi) * (loss.alpha + loss.beta)
}

/// Weighted risk from raw error counts.
#[inline]
pub fn risk_from_counts(
    weights: (f64, f64),
    machine_errors: usize,
    n0: usize,
    human_errors: usize,
    n1: usize,
) -> f64 {
    weights.0 * (machine_errors as f64 / n0 as f64) + weights.1 * (human_errors as f64 / n1 as f64)
}

/// Per-class sample counts `(n0, n1)`; errors if either class is absent.
pub fn class_counts(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    let n0 = samples.iter().filter(|s| s.label == Label::Machine).count();
    let n1 = samples.len() - n0;
    if n0 == 0 || n1 == 0 {
        return Err(Error::InsufficientData(format!(
            "need at least one sample per class, got {n0} machine and {n1} human"
        )));
    }
    Ok((n0, n1))
}

fn check_inputs(samples: &[ScoredSample], pi: f64, loss: &LossSpec) -> Result<(usize, usize)> {
    validate_pi(pi)?;
    loss.validate()?;
    if let Some(bad) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sample `{}` has non-finite score {}",
            bad.sample_id, bad.score
        )));
    }
    class_counts(samples)
}

pub fn empirical_risk(
    samples: &[ScoredSample],
    rule: &DecisionRule,
    pi: f64,
    loss: &LossSpec,
) -> Result<f64> {
    let (n0, n1) = check_inputs(samples, pi, loss)?;
    let mut machine_errors = 0;
    let mut human_errors = 0;
    for s in samples {
        match (s.label, classify(s.score, rule)?) {
            (Label::Machine, Label::Human) => machine_errors += 1,
            (Label::Human, Label::Machine) => human_errors += 1,
            _ => {}
        }
    }
    Ok(risk_from_counts(
        duality_canonical(pi, loss),
        machine_errors,
        n0,
        human_errors,
        n1,
    ))
}

/// Threshold strictly above `lo` and at most `hi`, used between adjacent distinct scores.
fn split_point(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Sweep every attainable split of the sorted scores in both orientations.
pub fn risk_curve(samples: &[ScoredSample], pi: f64, loss: &LossSpec) -> Result<RiskCurve> {
    let (n0, n1) = check_inputs(samples, pi, loss)?;
    let weights = duality_canonical(pi, loss);

    let mut sorted: Vec<(f64, Label)> = samples.iter().map(|s| (s.score, s.label)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // (threshold, machines strictly below, humans strictly below)
    let mut cuts = Vec::with_capacity(sorted.len() + 1);
    cuts.push((f64::NEG_INFINITY, 0usize, 0usize));
    let (mut m_below, mut h_below) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == value {
            match sorted[i].1 {
                Label::Machine => m_below += 1,
                Label::Human => h_below += 1,
            }
            i += 1;
        }
        if i < sorted.len() {
            cuts.push((split_point(value, sorted[i].0), m_below, h_below));
        }
    }
    cuts.push((f64::INFINITY, n0, n1));

    let mut points = Vec::with_capacity(cuts.len() * 2);
    for orientation in Orientation::BOTH {
        for &(threshold, m_below, h_below) in &cuts {
            let (machine_errors, human_errors) = match orientation {
                Orientation::LowIsMachine => (n0 - m_below, h_below),
                Orientation::LowIsHuman => (m_below, n1 - h_below),
            };
            points.push(RiskPoint {
                rule: DecisionRule::new(threshold, orientation),
                risk: risk_from_counts(weights, machine_errors, n0, human_errors, n1),
            });
        }
    }
    Ok(RiskCurve {
        points,
        pi,
        loss: *loss,
    })
}

/// Empirical risk minimiser over the threshold family.
///
/// Ties go to low-is-machine, then to the smallest threshold.
pub fn optimal_rule(
    samples: &[ScoredSample],
    pi: f64,
    loss: &LossSpec,
) -> Result<(DecisionRule, f64)> {
    let curve = risk_curve(samples, pi, loss)?;
    let mut best = curve.points[0];
    for p in &curve.points[1..] {
        if p.risk < best.risk {
            best = *p;
        }
    }
    Ok((best.rule, best.risk))
}

/// Empirical tau-undetectability on the full sample.
pub fn tau_hat(samples: &[ScoredSample], pi: f64, loss: &LossSpec) -> Result<TauReport> {
    let (n0, n1) = check_inputs(samples, pi, loss)?;
    let chance = chance_risk(pi, loss);
    if chance <= 0.0 {
        return Err(Error::UndefinedTau { pi });
    }
    let (rule, risk) = optimal_rule(samples, pi, loss)?;
    Ok(TauReport {
        context_id: String::new(),
        model_id: String::new(),
        transform: String::new(),
        tau_hat: 1.0 - risk / chance,
        risk,
        chance_risk: chance,
        threshold: rule.threshold,
        orientation: rule.orientation,
        n0,
        n1,
        pi,
        alpha: loss.alpha,
        beta: loss.beta,
        sample_space_id: String::new(),
        tau_cv: None,
        score_file: None,
        transform_spec: None,
    })
}

/// Detectability over a union of disjoint sample spaces: the largest per-space tau.
pub fn compose_max(reports: &[TauReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("compose_max needs at least one report".into()));
    }
    let mut seen = HashSet::new();
    for r in reports {
        if !seen.insert(r.sample_space_id.as_str()) {
            return Err(Error::CompositionViolation(r.sample_space_id.clone()));
        }
    }
    Ok(reports
        .iter()
        .map(|r| r.tau_hat)
        .fold(f64::NEG_INFINITY, f64::max))
}
