// Every detector transform on two texts, using the offline synthetic providers.
//
// ```bash
// cargo run --example offline_transforms
// ```

use taudetect::corpus::CorpusRecord;
use taudetect::providers::ProviderSet;
use taudetect::risk::Label;
use taudetect::transforms::{score_record, TransformKind, TransformSpec};

pub fn run_example() -> taudetect::Result<()> {
    let providers = ProviderSet::synthetic();
    let texts = [
        CorpusRecord::new(
            "prose",
            "The river ran slowly past the old mill, and the children waited on the bank for the ferry.",
            Label::Human,
            "demo",
        ),
        CorpusRecord::new("noise", "qz vbx kkwp ytr mmnq zzl oqqj xvb tpw kqqz", Label::Machine, "demo"),
    ];
    for kind in [
        TransformKind::Likelihood,
        TransformKind::LogRank,
        TransformKind::LogOfRank,
        TransformKind::DetectGpt,
        TransformKind::ProxiHuman,
    ] {
        let spec = TransformSpec::new(kind).with_perturbations(8).with_k(3).with_seed(1);
        let scores: Vec<String> = texts
            .iter()
            .map(|r| score_record(r, &spec, &providers).map(|s| format!("{s:>9.4}")))
            .collect::<taudetect::Result<_>>()?;
        println!("{:>10}: {}", kind.display_name(), scores.join("  "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
