// The full pipeline on the bundled fixture: score, evaluate and tabulate.
//
// ```bash
// cargo run --example end_to_end
// ```

use std::path::Path;

use taudetect::cli::{build_providers, cmd_eval, cmd_report, cmd_score, RunConfig};
use taudetect::report::Format;

pub fn run_example() -> taudetect::Result<()> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/config.toml");
    let mut cfg = RunConfig::load(&fixture)?;
    cfg.out = std::env::temp_dir().join(format!("taudetect-e2e-{}", std::process::id()));
    let providers = build_providers(&cfg.providers)?;

    let mut files = Vec::new();
    for c in &cfg.contexts {
        for m in &cfg.models {
            for t in &cfg.transforms {
                files.push(cmd_score(&cfg, &providers, &c.id, m, t.name())?);
            }
        }
    }
    let reports = cmd_eval(&files, cfg.pi, &cfg.loss(), cfg.folds, cfg.seed)?;
    let (table, _json) = cmd_report(&reports, &cfg.layout(), Format::Plain)?;
    print!("{table}");
    std::fs::remove_dir_all(&cfg.out).map_err(|e| taudetect::Error::io(&cfg.out, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
