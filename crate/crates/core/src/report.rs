//! Aggregation of τ̂ reports into transform × (context, model) tables with
//! per-model maxima, column averages and an average gap between two models.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{chance_risk, LossSpec, Orientation, TauReport};

pub const ABSENT: &str = "—";
pub const MAX_GROUP: &str = "Max";
const CANONICAL_ROWS: [&str; 5] = ["Likelihood", "LogRank", "LogOfRank", "DetectGPT", "ProxiHuman"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLayout {
    pub contexts: Vec<String>,
    pub models: Vec<String>,
    pub transforms: Vec<String>,
    /// The two models whose column averages are differenced.
    pub model_pair: Option<(String, String)>,
}

impl TableLayout {
    /// Layout derived from the reports alone: contexts and models sorted,
    /// transforms in canonical order followed by any others sorted.
    pub fn inferred(reports: &[TauReport], model_pair: Option<(String, String)>) -> Self {
        let contexts: BTreeSet<&str> = reports.iter().map(|r| r.context_id.as_str()).collect();
        let models: BTreeSet<&str> = reports.iter().map(|r| r.model_id.as_str()).collect();
        let present: BTreeSet<&str> = reports.iter().map(|r| r.transform.as_str()).collect();
        let mut transforms: Vec<String> = CANONICAL_ROWS
            .iter()
            .filter(|t| present.contains(*t))
            .map(|t| t.to_string())
            .collect();
        transforms.extend(
            present
                .iter()
                .filter(|t| !CANONICAL_ROWS.contains(t))
                .map(|t| t.to_string()),
        );
        TableLayout {
            contexts: contexts.into_iter().map(String::from).collect(),
            models: models.into_iter().map(String::from).collect(),
            transforms,
            model_pair,
        }
    }
}

/// One τ̂ cell and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub tau_hat: f64,
    pub bold: bool,
    pub score_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub layout: TableLayout,
    /// `cells[row][context][model]`.
    pub cells: Vec<Vec<Vec<Option<Cell>>>>,
    /// `max[row][model]`.
    pub max: Vec<Vec<Option<f64>>>,
    /// `max_bold[row][model]`: largest Max for that model.
    pub max_bold: Vec<Vec<bool>>,
    /// `average[context][model]`, over present rows.
    pub average: Vec<Vec<Option<f64>>>,
    pub average_max: Vec<Option<f64>>,
    /// Per context, then the Max group last.
    pub avg_gap: Vec<Option<f64>>,
    pub pi: f64,
    pub loss: LossSpec,
    pub has_absent: bool,
}

/// A report carrying only a τ̂ value, at π = 0.5 and 0-1 loss.
pub fn cell_report(context_id: &str, model_id: &str, transform: &str, tau_hat: f64) -> TauReport {
    let chance = chance_risk(0.5, &LossSpec::ZERO_ONE);
    TauReport {
        context_id: context_id.into(),
        model_id: model_id.into(),
        transform: transform.into(),
        tau_hat,
        risk: (1.0 - tau_hat) * chance,
        chance_risk: chance,
        threshold: f64::NEG_INFINITY,
        orientation: Orientation::LowIsMachine,
        n0: 0,
        n1: 0,
        pi: 0.5,
        alpha: 1.0,
        beta: 1.0,
        sample_space_id: context_id.into(),
        tau_cv: None,
        score_file: None,
        transform_spec: None,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn max_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
}

pub fn aggregate_table(reports: &[TauReport], layout: &TableLayout) -> Result<ReportTable> {
    let (pi, loss) = match reports.first() {
        Some(r) => (r.pi, r.loss()),
        None => (0.5, LossSpec::ZERO_ONE),
    };
    if let Some(r) = reports.iter().find(|r| r.pi != pi || r.loss() != loss) {
        return Err(Error::Aggregation(format!(
            "report ({}, {}, {}) uses pi={} loss=({}, {}), others use pi={pi} loss=({}, {})",
            r.context_id, r.model_id, r.transform, r.pi, r.alpha, r.beta, loss.alpha, loss.beta
        )));
    }
    let mut by_key: BTreeMap<(&str, &str, &str), &TauReport> = BTreeMap::new();
    for r in reports {
        let key = (r.transform.as_str(), r.context_id.as_str(), r.model_id.as_str());
        if by_key.insert(key, r).is_some() {
            return Err(Error::Aggregation(format!(
                "duplicate report for transform {} context {} model {}",
                key.0, key.1, key.2
            )));
        }
    }
    let (nr, nc, nm) = (layout.transforms.len(), layout.contexts.len(), layout.models.len());

    let mut cells = vec![vec![vec![None; nm]; nc]; nr];
    let mut has_absent = false;
    for (i, t) in layout.transforms.iter().enumerate() {
        for (j, c) in layout.contexts.iter().enumerate() {
            for (k, m) in layout.models.iter().enumerate() {
                match by_key.get(&(t.as_str(), c.as_str(), m.as_str())) {
                    Some(r) => {
                        cells[i][j][k] = Some(Cell {
                            tau_hat: r.tau_hat,
                            bold: false,
                            score_file: r.score_file.clone(),
                        })
                    }
                    None => has_absent = true,
                }
            }
        }
    }
    let tau = |cells: &Vec<Vec<Vec<Option<Cell>>>>, i: usize, j: usize, k: usize| {
        cells[i][j][k].as_ref().map(|c| c.tau_hat)
    };

    // per-(context, model) maximum row is emphasized, ties included
    for j in 0..nc {
        for k in 0..nm {
            if let Some(best) = max_of((0..nr).filter_map(|i| tau(&cells, i, j, k))) {
                for row in cells.iter_mut() {
                    if let Some(c) = row[j][k].as_mut() {
                        c.bold = c.tau_hat == best;
                    }
                }
            }
        }
    }

    let max: Vec<Vec<Option<f64>>> = (0..nr)
        .map(|i| (0..nm).map(|k| max_of((0..nc).filter_map(|j| tau(&cells, i, j, k)))).collect())
        .collect();
    let max_bold: Vec<Vec<bool>> = {
        let best: Vec<Option<f64>> = (0..nm).map(|k| max_of((0..nr).filter_map(|i| max[i][k]))).collect();
        (0..nr)
            .map(|i| (0..nm).map(|k| max[i][k].is_some() && max[i][k] == best[k]).collect())
            .collect()
    };
    let average: Vec<Vec<Option<f64>>> = (0..nc)
        .map(|j| (0..nm).map(|k| mean((0..nr).filter_map(|i| tau(&cells, i, j, k)))).collect())
        .collect();
    let average_max: Vec<Option<f64>> = (0..nm).map(|k| mean((0..nr).filter_map(|i| max[i][k]))).collect();

    let pair_idx = layout.model_pair.as_ref().and_then(|(a, b)| {
        let pos = |m: &String| layout.models.iter().position(|x| x == m);
        Some((pos(a)?, pos(b)?))
    });
    if let (Some((a, b)), None) = (&layout.model_pair, pair_idx) {
        log::warn!("model pair ({a}, {b}) not in the table; Avg gap omitted");
    }
    let gap = |row: &Vec<Option<f64>>| match pair_idx {
        Some((a, b)) => Some((row[a]? - row[b]?).abs()),
        None => None,
    };
    let mut avg_gap: Vec<Option<f64>> = average.iter().map(gap).collect();
    avg_gap.push(gap(&average_max));

    Ok(ReportTable {
        layout: layout.clone(),
        cells,
        max,
        max_bold,
        average,
        average_max,
        avg_gap,
        pi,
        loss,
        has_absent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Plain,
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "plain-table" => Ok(Format::Plain),
            "csv" | "comma-separated" => Ok(Format::Csv),
            "markdown" | "md" | "markup-table" => Ok(Format::Markdown),
            other => Err(Error::InvalidInput(format!("unknown report format `{other}`"))),
        }
    }
}

pub fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

#[derive(Clone, Copy)]
enum Mark {
    None,
    Bold,
}

struct Grid {
    groups: Vec<String>,
    models: Vec<String>,
    /// label, then (text, mark) per column.
    rows: Vec<(String, Vec<(String, Mark)>)>,
}

impl ReportTable {
    pub fn is_empty(&self) -> bool {
        self.cells.iter().flatten().flatten().all(Option::is_none)
    }

    fn grid(&self) -> Grid {
        let nm = self.layout.models.len();
        let num = |v: Option<f64>, bold: bool| match v {
            Some(v) => (fmt2(v), if bold { Mark::Bold } else { Mark::None }),
            None => (ABSENT.to_string(), Mark::None),
        };
        let mut rows = Vec::new();
        for (i, t) in self.layout.transforms.iter().enumerate() {
            let mut cols = Vec::new();
            for ctx in &self.cells[i] {
                for c in ctx {
                    cols.push(num(c.as_ref().map(|c| c.tau_hat), c.as_ref().is_some_and(|c| c.bold)));
                }
            }
            for k in 0..nm {
                cols.push(num(self.max[i][k], self.max_bold[i][k]));
            }
            rows.push((t.clone(), cols));
        }
        let mut avg = Vec::new();
        for ctx in &self.average {
            avg.extend(ctx.iter().map(|v| num(*v, false)));
        }
        avg.extend(self.average_max.iter().map(|v| num(*v, false)));
        rows.push(("Average".to_string(), avg));
        if self.layout.model_pair.is_some() {
            let mut gap = Vec::new();
            for g in &self.avg_gap {
                gap.push(num(*g, false));
                gap.extend((1..nm).map(|_| (String::new(), Mark::None)));
            }
            rows.push(("Avg gap".to_string(), gap));
        }
        let mut groups = self.layout.contexts.clone();
        groups.push(MAX_GROUP.to_string());
        Grid {
            groups,
            models: self.layout.models.clone(),
            rows,
        }
    }

    fn footnote(&self) -> Option<String> {
        self.has_absent
            .then(|| format!("{ABSENT} absent cell; excluded from Max, Average and Avg gap"))
    }

    pub fn render(&self, format: Format) -> String {
        if self.is_empty() {
            return "no reports\n".to_string();
        }
        let g = self.grid();
        let mut out = match format {
            Format::Plain => render_plain(&g),
            Format::Csv => render_csv(&g),
            Format::Markdown => render_markdown(&g),
        };
        if let Some(note) = self.footnote() {
            if format == Format::Csv {
                out.push_str(&format!("# {note}\n"));
            } else {
                out.push('\n');
                out.push_str(&note);
                out.push('\n');
            }
        }
        out
    }
}

fn headers(g: &Grid, sep: &str) -> Vec<String> {
    g.groups
        .iter()
        .flat_map(|grp| g.models.iter().map(move |m| format!("{grp}{sep}{m}")))
        .collect()
}

fn render_plain(g: &Grid) -> String {
    let label_w = g.rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0).max("Transform".len());
    let mut col_w = 5usize;
    for m in &g.models {
        col_w = col_w.max(m.chars().count());
    }
    let group_w = (col_w + 2) * g.models.len();
    let mut out = format!("{:label_w$}", "");
    for grp in &g.groups {
        out.push_str(&format!("  {:<w$}", grp, w = group_w - 2));
    }
    out = out.trim_end().to_string();
    out.push('\n');
    let mut line = format!("{:label_w$}", "Transform");
    for _ in &g.groups {
        for m in &g.models {
            line.push_str(&format!("  {m:>col_w$}"));
        }
    }
    out.push_str(line.trim_end());
    out.push('\n');
    for (label, cols) in &g.rows {
        let mut line = format!("{label:label_w$}");
        for (text, mark) in cols {
            let t = match mark {
                Mark::Bold => format!("{text}*"),
                Mark::None => text.clone(),
            };
            line.push_str(&format!("  {t:>col_w$}"));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out.push_str("\n* most detectable transform for the context and model\n");
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(g: &Grid) -> String {
    let mut out = String::from("transform");
    for h in headers(g, "/") {
        out.push(',');
        out.push_str(&csv_field(&h));
    }
    out.push('\n');
    for (label, cols) in &g.rows {
        out.push_str(&csv_field(label));
        for (text, mark) in cols {
            out.push(',');
            match mark {
                Mark::Bold => out.push_str(&csv_field(&format!("{text}*"))),
                Mark::None => out.push_str(&csv_field(text)),
            }
        }
        out.push('\n');
    }
    out
}

fn render_markdown(g: &Grid) -> String {
    let hs = headers(g, " ");
    let mut out = format!("| Transform | {} |\n", hs.join(" | "));
    out.push_str(&format!("|---|{}\n", "---:|".repeat(hs.len())));
    for (label, cols) in &g.rows {
        let cells: Vec<String> = cols
            .iter()
            .map(|(t, m)| match m {
                Mark::Bold => format!("**{t}**"),
                Mark::None => t.clone(),
            })
            .collect();
        out.push_str(&format!("| {label} | {} |\n", cells.join(" | ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Vec<TauReport> {
        vec![
            cell_report("a", "m1", "Likelihood", 0.5),
            cell_report("a", "m2", "Likelihood", 0.2),
            cell_report("b", "m1", "Likelihood", 0.7),
            cell_report("b", "m2", "Likelihood", 0.4),
            cell_report("a", "m1", "DetectGPT", 0.5),
            cell_report("a", "m2", "DetectGPT", 0.1),
            cell_report("b", "m1", "DetectGPT", 0.3),
        ]
    }

    fn layout() -> TableLayout {
        TableLayout::inferred(&small(), Some(("m1".into(), "m2".into())))
    }

    #[test]
    fn aggregates() {
        let t = aggregate_table(&small(), &layout()).unwrap();
        assert_eq!(t.layout.transforms, vec!["Likelihood", "DetectGPT"]);
        assert_eq!(t.max[0], vec![Some(0.7), Some(0.4)]);
        assert_eq!(t.max[1], vec![Some(0.5), Some(0.1)]);
        assert_eq!(t.average[1][1], Some(0.4));
        assert!(t.has_absent);
        // tie at context a, model m1 marks both rows
        assert!(t.cells[0][0][0].as_ref().unwrap().bold && t.cells[1][0][0].as_ref().unwrap().bold);
        assert!((t.avg_gap[0].unwrap() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariant() {
        let mut rev = small();
        rev.reverse();
        let a = aggregate_table(&small(), &layout()).unwrap();
        let b = aggregate_table(&rev, &TableLayout::inferred(&rev, Some(("m1".into(), "m2".into())))).unwrap();
        assert_eq!(a, b);
        for f in [Format::Plain, Format::Csv, Format::Markdown] {
            assert_eq!(a.render(f), b.render(f));
        }
    }

    #[test]
    fn inconsistent_pi_rejected() {
        let mut r = small();
        r[2].pi = 0.3;
        assert!(matches!(aggregate_table(&r, &layout()), Err(Error::Aggregation(_))));
        let mut d = small();
        d.push(cell_report("a", "m1", "Likelihood", 0.9));
        assert!(matches!(aggregate_table(&d, &layout()), Err(Error::Aggregation(_))));
    }

    #[test]
    fn empty_and_absent_rendering() {
        let t = aggregate_table(&[], &TableLayout::inferred(&[], None)).unwrap();
        assert_eq!(t.render(Format::Plain), "no reports\n");
        let t = aggregate_table(&small(), &layout()).unwrap();
        let md = t.render(Format::Markdown);
        assert!(md.contains(ABSENT) && md.contains("absent cell"));
        assert!(md.contains("**0.70**"));
        let csv = t.render(Format::Csv);
        assert!(csv.starts_with("transform,a/m1,a/m2,b/m1,b/m2,Max/m1,Max/m2\n"));
    }
}
