// Aggregating per-context τ̂ values into a table with maxima, averages and a model gap.
//
// ```bash
// cargo run --example report_table
// ```

use taudetect::report::{aggregate_table, cell_report, Format, TableLayout};

pub fn run_example() -> taudetect::Result<()> {
    let cells = [
        ("news", "small", "Likelihood", 0.62),
        ("news", "large", "Likelihood", 0.41),
        ("wiki", "small", "Likelihood", 0.77),
        ("wiki", "large", "Likelihood", 0.58),
        ("news", "small", "ProxiHuman", 0.70),
        ("news", "large", "ProxiHuman", 0.35),
        ("wiki", "small", "ProxiHuman", 0.52),
    ];
    let reports: Vec<_> = cells.iter().map(|(c, m, t, v)| cell_report(c, m, t, *v)).collect();
    let layout = TableLayout {
        contexts: vec!["news".into(), "wiki".into()],
        models: vec!["small".into(), "large".into()],
        transforms: vec!["Likelihood".into(), "ProxiHuman".into()],
        model_pair: Some(("small".into(), "large".into())),
    };
    let table = aggregate_table(&reports, &layout)?;
    print!("{}", table.render(Format::Plain));
    println!();
    print!("{}", table.render(Format::Markdown));
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
