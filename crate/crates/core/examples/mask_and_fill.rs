// Seeded mask-and-fill perturbations of one text.
//
// ```bash
// cargo run --example mask_and_fill
// ```

use taudetect::providers::synthetic::UnigramFiller;
use taudetect::providers::MaskFiller;
use taudetect::transforms::{mask_spans, perturb, tokenize, TransformKind, TransformSpec};

pub fn run_example() -> taudetect::Result<()> {
    let text = "A lighthouse is a tower that carries a lamp and lenses to guide ships at night";
    let tokens = tokenize(text);
    let template = mask_spans(&tokens, 0.2, 42)?;
    println!("masked:  {}", template.sentinel_text());

    let filler = UnigramFiller::reference();
    println!("filled:  {}", filler.fill_masks(&template, 42)?.text);

    let spec = TransformSpec::new(TransformKind::DetectGpt).with_perturbations(3);
    for p in perturb(text, &filler, &spec, 7)? {
        println!("#{} {:?}: {}", p.index, p.masked_positions, p.text);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
