//! Paired human/machine corpora: loading, per-class sampling, prompt
//! templates, and machine-corpus construction through a generation provider.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::providers::{GenerationRequest, TextGenerator};
use crate::risk::Label;
use crate::seed::derive_seed;
use crate::transforms::tokenize;

pub const FORMAT_VERSION: u32 = 1;

/// Token-count rule recorded in record metadata.
pub const TOKEN_RULE: &str = "whitespace";

fn format_v1() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(default = "format_v1")]
    pub format_version: u32,
    pub id: String,
    pub text: String,
    pub label: Label,
    pub context_id: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label, context_id: impl Into<String>) -> Self {
        CorpusRecord {
            format_version: FORMAT_VERSION,
            id: id.into(),
            text: text.into(),
            label,
            context_id: context_id.into(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn model_id(&self) -> Option<&str> {
        self.meta.get("model_id").map(String::as_str)
    }

    pub fn token_count(&self) -> usize {
        tokenize(&self.text).len()
    }
}

pub fn parse_corpus(source: &str, path: &Path) -> Result<Vec<CorpusRecord>> {
    let mut records = Vec::new();
    for (n, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: CorpusRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if rec.format_version != FORMAT_VERSION {
            return Err(err(format!("unsupported format_version {}", rec.format_version)));
        }
        if rec.text.is_empty() {
            return Err(err(format!("record `{}` has empty text", rec.id)));
        }
        records.push(rec);
    }
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = records
        .iter()
        .filter(|r| !seen.insert(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !dups.is_empty() {
        dups.dedup();
        return Err(Error::DuplicateIds(dups));
    }
    Ok(records)
}

/// Read a newline-delimited corpus, in file order.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&source, path)
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[CorpusRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub human: Vec<CorpusRecord>,
    pub machine: Vec<CorpusRecord>,
}

fn pick<'a>(pool: Vec<&'a CorpusRecord>, n: usize, rng: &mut ChaCha8Rng, what: &str) -> Result<Vec<&'a CorpusRecord>> {
    if pool.len() < n {
        return Err(Error::InsufficientData(format!(
            "requested {n} {what} records but only {} are available",
            pool.len()
        )));
    }
    let mut pool = pool;
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    pool.shuffle(rng);
    pool.truncate(n);
    Ok(pool)
}

/// Uniform without-replacement sample of `per_class` records per class.
///
/// Selection depends on record ids, not file order. With `disjoint_pools`,
/// machine records whose `source_id` names a selected human record are excluded.
pub fn sample_split(records: &[CorpusRecord], per_class: usize, seed: u64, disjoint_pools: bool) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let humans: Vec<&CorpusRecord> = records.iter().filter(|r| r.label == Label::Human).collect();
    let human = pick(humans, per_class, &mut rng, "human")?;
    let chosen: HashSet<&str> = human.iter().map(|r| r.id.as_str()).collect();
    let machines: Vec<&CorpusRecord> = records
        .iter()
        .filter(|r| r.label == Label::Machine)
        .filter(|r| {
            !disjoint_pools || r.meta.get("source_id").is_none_or(|s| !chosen.contains(s.as_str()))
        })
        .collect();
    let machine = pick(machines, per_class, &mut rng, "machine")?;
    Ok(Split {
        human: human.into_iter().cloned().collect(),
        machine: machine.into_iter().cloned().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub dataset_id: String,
    pub template: String,
}

impl PromptTemplate {
    pub fn new(dataset_id: &str, template: &str) -> Self {
        PromptTemplate {
            dataset_id: dataset_id.into(),
            template: template.into(),
        }
    }

    pub fn wiki_intro() -> Self {
        Self::new("wiki_intro", "200 word wikipedia style introduction on '{topic}' {start_prompt}")
    }

    pub fn xsum() -> Self {
        Self::new(
            "xsum",
            "Please continue this news story using {target_answer_length} words. {start_prompt}:",
        )
    }

    pub fn writing_prompts() -> Self {
        Self::new(
            "writing_prompts",
            "You are a creative writer. Please write a compelling story of around {target_answer_length} words based {start_prompt}",
        )
    }

    pub fn pubmed_qa() -> Self {
        Self::new(
            "pubmed_qa",
            "You are an AI model trained to share general medical knowledge. Please answer the medical question in {target_answer_length} words and be as informative as possible.",
        )
    }

    pub fn bundled(dataset_id: &str) -> Option<Self> {
        match dataset_id {
            "wiki_intro" => Some(Self::wiki_intro()),
            "xsum" => Some(Self::xsum()),
            "writing_prompts" => Some(Self::writing_prompts()),
            "pubmed_qa" => Some(Self::pubmed_qa()),
            _ => None,
        }
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        scan(&self.template, |name| {
            if !out.iter().any(|n: &String| n == name) {
                out.push(name.to_string());
            }
            None
        });
        out
    }
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Walk `{name}` placeholders; `f` returns the replacement or `None` to keep it.
fn scan(template: &str, mut f: impl FnMut(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                let name = &after[..close];
                match f(name) {
                    Some(v) => out.push_str(&v),
                    None => out.push_str(&rest[open..open + close + 2]),
                }
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Substitute every placeholder; nothing else in the template changes.
pub fn render_prompt(template: &PromptTemplate, bindings: &HashMap<String, String>) -> Result<String> {
    let mut missing = None;
    let out = scan(&template.template, |name| match bindings.get(name) {
        Some(v) => Some(v.clone()),
        None => {
            missing.get_or_insert_with(|| name.to_string());
            None
        }
    });
    match missing {
        Some(name) => Err(Error::MissingBinding(name)),
        None => Ok(out),
    }
}

fn default_sample_size() -> usize {
    100
}
fn default_start_tokens() -> usize {
    30
}
fn default_true() -> bool {
    true
}
fn default_failure_limit() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecipe {
    pub model_id: String,
    /// Bundled template name; defaults to the manifest's dataset id.
    #[serde(default)]
    pub template: Option<String>,
    /// Literal template overriding any bundled one.
    #[serde(default)]
    pub template_text: Option<String>,
    #[serde(default = "default_start_tokens")]
    pub start_prompt_tokens: usize,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<usize>,
    #[serde(default = "default_failure_limit")]
    pub failure_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub dataset_id: String,
    pub context_id: String,
    pub human_source: PathBuf,
    #[serde(default)]
    pub machine_source: Option<PathBuf>,
    #[serde(default)]
    pub generation: Option<GenerationRecipe>,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_true")]
    pub disjoint_pools: bool,
    /// Records dropped before sampling (content-filter decisions).
    #[serde(default)]
    pub exclude_ids: Vec<String>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Config {
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.human_source = base.join(&m.human_source);
        m.machine_source = m.machine_source.map(|p| base.join(p));
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |field: &str, message: String| Error::Config {
            field: field.into(),
            message,
        };
        if self.format_version != FORMAT_VERSION {
            return Err(cfg("format_version", format!("unsupported version {}", self.format_version)));
        }
        if self.sample_size == 0 {
            return Err(cfg("sample_size", "must be at least 1".into()));
        }
        if self.machine_source.is_none() && self.generation.is_none() {
            return Err(cfg("generation", "need a machine_source or a generation recipe".into()));
        }
        Ok(())
    }

    fn template(&self, recipe: &GenerationRecipe) -> Result<PromptTemplate> {
        if let Some(text) = &recipe.template_text {
            return Ok(PromptTemplate::new(&self.dataset_id, text));
        }
        let name = recipe.template.as_deref().unwrap_or(&self.dataset_id);
        PromptTemplate::bundled(name).ok_or_else(|| Error::Config {
            field: "generation.template".into(),
            message: format!("no bundled template named `{name}`"),
        })
    }
}

/// Prompt and requested length for one human source record.
pub fn build_prompt(
    template: &PromptTemplate,
    source: &CorpusRecord,
    start_prompt_tokens: usize,
) -> Result<(String, usize)> {
    let tokens = tokenize(&source.text);
    let target = tokens.len();
    let mut bindings: HashMap<String, String> = source
        .meta
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    bindings.insert("target_answer_length".into(), target.to_string());
    if !bindings.contains_key("start_prompt") {
        let n = if template.dataset_id == "wiki_intro" { 7 } else { start_prompt_tokens };
        bindings.insert("start_prompt".into(), tokens[..n.min(tokens.len())].join(" "));
    }
    let mut prompt = render_prompt(template, &bindings)?;
    if template.dataset_id == "pubmed_qa" {
        let q = source.meta.get("question").ok_or_else(|| Error::MissingBinding("question".into()))?;
        prompt.push_str("\n\n");
        prompt.push_str(q);
    }
    Ok((prompt, target))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineCorpus {
    pub human: Vec<CorpusRecord>,
    pub machine: Vec<CorpusRecord>,
    pub failures: Vec<(String, String)>,
}

impl MachineCorpus {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn records(&self) -> Vec<CorpusRecord> {
        self.human.iter().chain(&self.machine).cloned().collect()
    }
}

/// Sample human records and generate one machine record per prompt source.
pub fn build_machine_corpus(
    manifest: &DatasetManifest,
    human_source: &[CorpusRecord],
    generator: &dyn TextGenerator,
) -> Result<MachineCorpus> {
    let recipe = manifest.generation.as_ref().ok_or_else(|| Error::Config {
        field: "generation".into(),
        message: "manifest has no generation recipe".into(),
    })?;
    let template = manifest.template(recipe)?;
    let excluded: HashSet<&str> = manifest.exclude_ids.iter().map(String::as_str).collect();
    let pool: Vec<&CorpusRecord> = human_source
        .iter()
        .filter(|r| r.label == Label::Human && !excluded.contains(r.id.as_str()))
        .collect();

    let n = manifest.sample_size;
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.split_seed);
    let human: Vec<&CorpusRecord> = pick(pool.clone(), n, &mut rng, "human")?;
    let chosen: HashSet<&str> = human.iter().map(|r| r.id.as_str()).collect();
    let prompt_pool: Vec<&CorpusRecord> = if manifest.disjoint_pools {
        pool.into_iter().filter(|r| !chosen.contains(r.id.as_str())).collect()
    } else {
        pool
    };
    let sources = pick(prompt_pool, n, &mut rng, "prompt-source")?;

    let identity = generator.identity();
    let mut machine = Vec::new();
    let mut failures = Vec::new();
    for src in sources {
        let (prompt, target) = match build_prompt(&template, src, recipe.start_prompt_tokens) {
            Ok(p) => p,
            Err(e) => {
                failures.push((src.id.clone(), e.to_string()));
                continue;
            }
        };
        let request = GenerationRequest {
            prompt: prompt.clone(),
            max_tokens: recipe.max_tokens.unwrap_or(target),
            temperature: recipe.temperature,
            seed_hint: Some(derive_seed(manifest.split_seed, &src.id)),
        };
        match generator.generate(&request) {
            Ok(text) if !text.trim().is_empty() => {
                let rec = CorpusRecord::new(
                    format!("{}:{}", recipe.model_id, src.id),
                    text,
                    Label::Machine,
                    &manifest.context_id,
                )
                .with_meta("model_id", &recipe.model_id)
                .with_meta("source_id", &src.id)
                .with_meta("source_dataset", &manifest.dataset_id)
                .with_meta("prompt", prompt)
                .with_meta("requested_length", request.max_tokens.to_string())
                .with_meta("token_rule", TOKEN_RULE)
                .with_meta(
                    "temperature",
                    recipe.temperature.map_or("provider-default".to_string(), |t| t.to_string()),
                )
                .with_meta("generator_kind", &identity.kind)
                .with_meta("generator_model", &identity.model_name);
                machine.push(rec);
            }
            Ok(_) => failures.push((src.id.clone(), "empty generation".into())),
            Err(e) => failures.push((src.id.clone(), e.to_string())),
        }
    }
    if failures.len() as f64 > recipe.failure_limit * n as f64 {
        return Err(Error::FailureLimit {
            failed: failures.len(),
            total: n,
            limit: recipe.failure_limit,
            failures,
        });
    }
    let mut human: Vec<CorpusRecord> = human.into_iter().cloned().collect();
    for r in &mut human {
        r.context_id = manifest.context_id.clone();
        r.meta.entry("source_dataset".into()).or_insert_with(|| manifest.dataset_id.clone());
    }
    human.sort_by(|a, b| a.id.cmp(&b.id));
    machine.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(MachineCorpus {
        human,
        machine,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ProviderIdentity;

    fn recs(n_h: usize, n_m: usize) -> Vec<CorpusRecord> {
        let mut out = Vec::new();
        for i in 0..n_h {
            out.push(CorpusRecord::new(format!("h{i:03}"), format!("human text {i}"), Label::Human, "c"));
        }
        for i in 0..n_m {
            out.push(
                CorpusRecord::new(format!("m{i:03}"), format!("machine text {i}"), Label::Machine, "c")
                    .with_meta("model_id", "gpt")
                    .with_meta("source_id", format!("h{i:03}")),
            );
        }
        out
    }

    #[test]
    fn load_four_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        write_corpus(&p, &recs(2, 2)).unwrap();
        let loaded = load_corpus(&p).unwrap();
        assert_eq!(loaded.len(), 4);
        assert_eq!(loaded, recs(2, 2));
    }

    #[test]
    fn duplicate_ids_are_named() {
        let src = "{\"id\":\"a\",\"text\":\"x\",\"label\":1,\"context_id\":\"c\"}\n{\"id\":\"a\",\"text\":\"y\",\"label\":0,\"context_id\":\"c\"}\n";
        match parse_corpus(src, Path::new("f")) {
            Err(Error::DuplicateIds(ids)) => assert_eq!(ids, vec!["a".to_string()]),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn bad_label_reports_line() {
        let src = "{\"id\":\"a\",\"text\":\"x\",\"label\":1,\"context_id\":\"c\"}\n{\"id\":\"b\",\"text\":\"y\",\"label\":2,\"context_id\":\"c\"}\n";
        match parse_corpus(src, Path::new("f")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_corpus("{broken\n", Path::new("f")), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn split_is_deterministic_and_order_free() {
        let records = recs(300, 300);
        let a = sample_split(&records, 100, 5, false).unwrap();
        let b = sample_split(&records, 100, 5, false).unwrap();
        assert_eq!(a, b);
        let mut rev = records.clone();
        rev.reverse();
        let c = sample_split(&rev, 100, 5, false).unwrap();
        let ids = |v: &[CorpusRecord]| v.iter().map(|r| r.id.clone()).collect::<HashSet<_>>();
        assert_eq!(ids(&a.human), ids(&c.human));
        assert_eq!(ids(&a.machine), ids(&c.machine));
    }

    #[test]
    fn split_insufficient() {
        let records = recs(100, 100);
        assert!(matches!(sample_split(&records, 101, 0, false), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn disjoint_pools_respected() {
        let records = recs(300, 300);
        let s = sample_split(&records, 100, 9, true).unwrap();
        let human: HashSet<_> = s.human.iter().map(|r| r.id.as_str()).collect();
        assert!(s.machine.iter().all(|m| !human.contains(m.meta["source_id"].as_str())));
    }

    #[test]
    fn table_one_templates() {
        let mut b = HashMap::new();
        b.insert("topic".to_string(), "Otters".to_string());
        b.insert("start_prompt".to_string(), "Otters are carnivorous mammals in the".to_string());
        assert_eq!(
            render_prompt(&PromptTemplate::wiki_intro(), &b).unwrap(),
            "200 word wikipedia style introduction on 'Otters' Otters are carnivorous mammals in the"
        );
        let mut p = HashMap::new();
        p.insert("target_answer_length".to_string(), "120".to_string());
        assert!(render_prompt(&PromptTemplate::pubmed_qa(), &p).unwrap().contains("in 120 words"));
        let err = render_prompt(&PromptTemplate::xsum(), &p).unwrap_err();
        assert!(matches!(err, Error::MissingBinding(name) if name == "start_prompt"));
    }

    #[test]
    fn render_leaves_other_text_alone() {
        let t = PromptTemplate::new("x", "a {b} {not a placeholder} {} c{");
        let mut bind = HashMap::new();
        bind.insert("b".to_string(), "B".to_string());
        assert_eq!(render_prompt(&t, &bind).unwrap(), "a B {not a placeholder} {} c{");
        assert_eq!(PromptTemplate::xsum().placeholders(), vec!["target_answer_length", "start_prompt"]);
    }

    struct Flaky;
    impl TextGenerator for Flaky {
        fn identity(&self) -> ProviderIdentity {
            ProviderIdentity::synthetic("flaky")
        }
        fn generate(&self, req: &GenerationRequest) -> Result<String> {
            if req.seed_hint.unwrap().is_multiple_of(3) {
                Err(Error::Provider { id: "gen".into(), message: "outage".into() })
            } else {
                Ok(format!("generated {} words", req.max_tokens))
            }
        }
    }

    fn manifest(dataset: &str, n: usize, limit: f64) -> DatasetManifest {
        DatasetManifest {
            format_version: 1,
            dataset_id: dataset.into(),
            context_id: dataset.into(),
            human_source: "unused".into(),
            machine_source: None,
            generation: Some(GenerationRecipe {
                model_id: "m".into(),
                template: None,
                template_text: None,
                start_prompt_tokens: 30,
                temperature: None,
                max_tokens: None,
                failure_limit: limit,
            }),
            sample_size: n,
            split_seed: 1,
            disjoint_pools: true,
            exclude_ids: vec![],
        }
    }

    #[test]
    fn pubmed_requested_length_matches_human_answer() {
        let human: Vec<CorpusRecord> = (0..4)
            .map(|i| {
                CorpusRecord::new(format!("q{i}"), "word ".repeat(5 + i).trim().to_string(), Label::Human, "pm")
                    .with_meta("question", format!("Does factor {i} matter?"))
            })
            .collect();
        let out = build_machine_corpus(&manifest("pubmed_qa", 2, 0.0), &human, &Partial).unwrap();
        for m in &out.machine {
            let src = human.iter().find(|h| h.id == m.meta["source_id"]).unwrap();
            assert_eq!(m.meta["requested_length"], src.token_count().to_string());
            assert!(m.meta["prompt"].ends_with(&src.meta["question"]));
            assert_eq!(m.label, Label::Machine);
        }
    }

    struct Partial;
    impl TextGenerator for Partial {
        fn identity(&self) -> ProviderIdentity {
            ProviderIdentity::synthetic("ok")
        }
        fn generate(&self, req: &GenerationRequest) -> Result<String> {
            Ok(format!("answer of {} words", req.max_tokens))
        }
    }

    #[test]
    fn failures_are_collected_below_limit() {
        let human: Vec<CorpusRecord> = (0..10)
            .map(|i| CorpusRecord::new(format!("s{i}"), format!("a story number {i} begins here"), Label::Human, "wp"))
            .collect();
        let strict = build_machine_corpus(&manifest("writing_prompts", 5, 0.0), &human, &Flaky);
        let lenient = build_machine_corpus(&manifest("writing_prompts", 5, 1.0), &human, &Flaky).unwrap();
        assert_eq!(lenient.machine.len() + lenient.failures.len(), 5);
        if lenient.is_partial() {
            assert!(matches!(strict, Err(Error::FailureLimit { .. })));
        }
    }
}
