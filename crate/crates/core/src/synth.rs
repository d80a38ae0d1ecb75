//! Gaussian score distributions with analytic ground truth.
//!
//! Used to check the risk engine against closed-form Bayes risks and to
//! exercise the information-processing inequality
//! `chance >= R(after lossy map) >= R(raw)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::risk::{chance_risk, duality_canonical, tau_hat, validate_pi, Label, LossSpec, ScoredSample};

/// Class-conditional score densities: `f0` for machine, `f1` for human.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub mu0: f64,
    pub sigma0: f64,
    pub mu1: f64,
    pub sigma1: f64,
}

impl GaussianPair {
    pub fn new(mu0: f64, sigma0: f64, mu1: f64, sigma1: f64) -> Result<Self> {
        let p = GaussianPair { mu0, sigma0, mu1, sigma1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        if !ok(self.sigma0) || !ok(self.sigma1) || !self.mu0.is_finite() || !self.mu1.is_finite() {
            return Err(Error::InvalidInput(format!("invalid gaussian pair {self:?}")));
        }
        Ok(())
    }

    /// The same pair with class roles exchanged.
    pub fn swapped(&self) -> Self {
        GaussianPair {
            mu0: self.mu1,
            sigma0: self.sigma1,
            mu1: self.mu0,
            sigma1: self.sigma0,
        }
    }

    fn normals(&self) -> (Normal<f64>, Normal<f64>) {
        (
            Normal::new(self.mu0, self.sigma0).expect("validated"),
            Normal::new(self.mu1, self.sigma1).expect("validated"),
        )
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `n` samples with labels drawn Bernoulli (machine with probability `pi`).
pub fn sample_scores(pair: &GaussianPair, pi: f64, n: usize, seed: u64) -> Result<Vec<ScoredSample>> {
    pair.validate()?;
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::InvalidInput(format!("pi must lie in (0, 1), got {pi}")));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2, got {n}")));
    }
    let (f0, f1) = pair.normals();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let (label, score) = if rng.random_bool(pi) {
                (Label::Machine, f0.sample(&mut rng))
            } else {
                (Label::Human, f1.sample(&mut rng))
            };
            ScoredSample::new(format!("s{i:07}"), label, score)
        })
        .collect())
}

/// Exactly `n_per_class` samples from each class.
pub fn sample_balanced(pair: &GaussianPair, n_per_class: usize, seed: u64) -> Result<Vec<ScoredSample>> {
    pair.validate()?;
    if n_per_class == 0 {
        return Err(Error::InvalidInput("need at least one sample per class".into()));
    }
    let (f0, f1) = pair.normals();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        out.push(ScoredSample::new(format!("m{i:07}"), Label::Machine, f0.sample(&mut rng)));
    }
    for i in 0..n_per_class {
        out.push(ScoredSample::new(format!("h{i:07}"), Label::Human, f1.sample(&mut rng)));
    }
    Ok(out)
}

/// Population risk of threshold `c`; `low_is_machine` selects the orientation.
fn population_risk(pair: &GaussianPair, w: (f64, f64), c: f64, low_is_machine: bool) -> f64 {
    let below0 = std_normal_cdf((c - pair.mu0) / pair.sigma0);
    let below1 = std_normal_cdf((c - pair.mu1) / pair.sigma1);
    if low_is_machine {
        w.0 * (1.0 - below0) + w.1 * below1
    } else {
        w.0 * below0 + w.1 * (1.0 - below1)
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / 2.0;
    (x, f(x))
}

const GRID: usize = 2000;

/// Minimal population risk over scalar threshold rules, both orientations,
/// including the two degenerate rules.
pub fn bayes_risk(pair: &GaussianPair, pi: f64, loss: &LossSpec) -> Result<f64> {
    pair.validate()?;
    validate_pi(pi)?;
    loss.validate()?;
    let w = duality_canonical(pi, loss);
    let spread = pair.sigma0.max(pair.sigma1);
    let lo = pair.mu0.min(pair.mu1) - 6.0 * spread;
    let hi = pair.mu0.max(pair.mu1) + 6.0 * spread;
    let step = (hi - lo) / GRID as f64;
    let mut best = w.0.min(w.1);
    for low_is_machine in [true, false] {
        let f = |c: f64| population_risk(pair, w, c, low_is_machine);
        // coarse scan brackets the global minimum, golden-section refines it
        let (i, _) = (0..=GRID)
            .map(|i| (i, f(lo + step * i as f64)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let a = lo + step * i.saturating_sub(1) as f64;
        let b = lo + step * (i + 1).min(GRID) as f64;
        let (_, r) = golden_section(f, a, b, 1e-10);
        best = best.min(r);
    }
    Ok(best.max(0.0))
}

pub fn analytic_tau(pair: &GaussianPair, pi: f64, loss: &LossSpec) -> Result<f64> {
    let chance = chance_risk(pi, loss);
    if chance <= 0.0 || chance.is_nan() {
        return Err(Error::UndefinedTau { pi });
    }
    Ok(1.0 - bayes_risk(pair, pi, loss)? / chance)
}

/// Bin index of `x` among `bins` equal-width bins on `[lo, hi]`; values outside clamp to the end bins.
pub fn quantize(bins: usize, lo: f64, hi: f64) -> impl Fn(f64) -> f64 + Send + Sync {
    assert!(bins >= 1 && hi > lo, "quantize needs bins >= 1 and hi > lo");
    move |x| {
        let b = ((x - lo) / (hi - lo) * bins as f64).floor();
        b.clamp(0.0, (bins - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub pair: GaussianPair,
    pub pi: f64,
    pub bayes_risk: f64,
    pub analytic_tau: f64,
    pub empirical_tau: f64,
    pub chance_risk: f64,
    /// Empirical optimal risk on raw scores.
    pub raw_risk: f64,
    /// Empirical optimal risk after the lossy map.
    pub mapped_risk: f64,
    pub slack: f64,
    pub passed: bool,
    pub n: usize,
    pub seed: u64,
}

/// Check `chance >= mapped >= raw - 3/sqrt(n)` on one sampled dataset.
///
/// A violation yields `passed = false`, not an error.
pub fn verify_information_processing(
    pair: &GaussianPair,
    pi: f64,
    loss: &LossSpec,
    n: usize,
    seed: u64,
    lossy_map: &dyn Fn(f64) -> f64,
) -> Result<OracleReport> {
    let samples = sample_scores(pair, pi, n, seed)?;
    let raw = tau_hat(&samples, pi, loss)?;
    let mapped_samples: Vec<ScoredSample> = samples
        .iter()
        .map(|s| ScoredSample::new(s.sample_id.clone(), s.label, lossy_map(s.score)))
        .collect();
    let mapped = tau_hat(&mapped_samples, pi, loss)?;
    let chance = chance_risk(pi, loss);
    let slack = 3.0 / (n as f64).sqrt();
    let passed = chance >= mapped.risk && mapped.risk >= raw.risk - slack;
    Ok(OracleReport {
        pair: *pair,
        pi,
        bayes_risk: bayes_risk(pair, pi, loss)?,
        analytic_tau: analytic_tau(pair, pi, loss)?,
        empirical_tau: raw.tau_hat,
        chance_risk: chance,
        raw_risk: raw.risk,
        mapped_risk: mapped.risk,
        slack,
        passed,
        n,
        seed,
    })
}
