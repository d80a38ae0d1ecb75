// Risk curve, optimal threshold rule and τ̂ for a handful of scored samples.
//
// ```bash
// cargo run --example tau_from_scores
// ```

use taudetect::risk::{chance_risk, compose_max, risk_curve, tau_hat, Label, LossSpec, ScoredSample};

pub fn run_example() -> taudetect::Result<()> {
    let samples = vec![
        ScoredSample::new("m1", Label::Machine, 0.1),
        ScoredSample::new("m2", Label::Machine, 0.4),
        ScoredSample::new("m3", Label::Machine, 0.35),
        ScoredSample::new("h1", Label::Human, 0.8),
        ScoredSample::new("h2", Label::Human, 0.3),
        ScoredSample::new("h3", Label::Human, 0.9),
    ];
    let loss = LossSpec::ZERO_ONE;

    let curve = risk_curve(&samples, 0.5, &loss)?;
    println!("{} candidate rules", curve.len());
    for p in curve.points.iter().take(4) {
        println!("  {:>6.3} {:<15} risk {:.4}", p.rule.threshold, p.rule.orientation.as_str(), p.risk);
    }

    let report = tau_hat(&samples, 0.5, &loss)?.with_ids("demo", "model", "score");
    println!(
        "best rule: {} at {:.3} | risk {:.4} | chance {:.4} | tau_hat {:.4}",
        report.orientation.as_str(),
        report.threshold,
        report.risk,
        chance_risk(0.5, &loss),
        report.tau_hat
    );

    let mut other = report.clone();
    other.sample_space_id = "other-context".into();
    other.tau_hat = 0.9;
    println!("composed over two contexts: {:.2}", compose_max(&[report, other])?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
