// Held-out τ̂: the in-sample optimum is optimistic, folds correct for it.
//
// ```bash
// cargo run --example cross_validation
// ```

use taudetect::risk::{cross_validated_tau, tau_hat, LossSpec};
use taudetect::synth::{sample_balanced, GaussianPair};

pub fn run_example() -> taudetect::Result<()> {
    let loss = LossSpec::ZERO_ONE;
    for (name, pair) in [
        ("identical", GaussianPair::new(0.0, 1.0, 0.0, 1.0)?),
        ("shifted", GaussianPair::new(0.0, 1.0, 1.0, 1.0)?),
        ("separated", GaussianPair::new(0.0, 0.1, 10.0, 0.1)?),
    ] {
        let samples = sample_balanced(&pair, 500, 3)?;
        let fit = tau_hat(&samples, 0.5, &loss)?;
        let cv = cross_validated_tau(&samples, 5, 11, 0.5, &loss)?;
        println!("{name:>10}: tau_hat {:.3}  tau_cv {:.3}", fit.tau_hat, cv);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
