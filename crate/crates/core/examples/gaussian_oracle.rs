// Closed-form Bayes risk against the empirical estimate, and the effect of
// coarsening scores before thresholding.
//
// ```bash
// cargo run --release --example gaussian_oracle
// ```

use taudetect::risk::{tau_hat, LossSpec};
use taudetect::synth::{
    analytic_tau, bayes_risk, quantize, sample_balanced, verify_information_processing, GaussianPair,
};

pub fn run_example() -> taudetect::Result<()> {
    let pair = GaussianPair::new(0.0, 1.0, 2.0, 1.0)?;
    let loss = LossSpec::ZERO_ONE;
    println!("bayes risk   {:.4}", bayes_risk(&pair, 0.5, &loss)?);
    println!("analytic tau {:.4}", analytic_tau(&pair, 0.5, &loss)?);
    for n in [100, 1000, 10000] {
        let t = tau_hat(&sample_balanced(&pair, n, 1)?, 0.5, &loss)?;
        println!("  n = {n:>5} per class: tau_hat {:.4}", t.tau_hat);
    }
    for bins in [2, 4, 16] {
        let q = quantize(bins, -4.0, 5.0);
        let r = verify_information_processing(&pair, 0.5, &loss, 20000, 5, &q)?;
        println!(
            "{bins:>2} bins: raw risk {:.4} mapped {:.4} chance {:.4} ok={}",
            r.raw_risk, r.mapped_risk, r.chance_risk, r.passed
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
