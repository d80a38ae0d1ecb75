mod support;

use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use support::{completion_for, published_layout, published_reports, MockServer};
use taudetect::cli::{cmd_eval, cmd_report, run, Cli, ScoreFile};
use taudetect::report::Format;
use taudetect::risk::LossSpec;
use taudetect::Error;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn taudetect(args: &[&str]) -> (taudetect::Result<()>, String) {
    let mut out = Vec::new();
    let argv = std::iter::once("taudetect").chain(args.iter().copied());
    let r = run(Cli::parse_from(argv), &mut out);
    (r, String::from_utf8(out).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (r, out) = taudetect(args);
    r.unwrap_or_else(|e| panic!("{args:?}: {e}"));
    out
}

/// A config over the fixture corpus with the given transform and provider tables.
fn write_config(dir: &Path, transforms: &str, providers: &str) -> PathBuf {
    let corpus = fixtures().join("corpus.jsonl");
    let text = format!(
        r#"format_version = 1
seed = 7
models = ["model-a", "model-b"]
model_pair = ["model-a", "model-b"]
folds = 2

[[contexts]]
id = "news"
corpus = "{}"

[[contexts]]
id = "wiki"
corpus = "{}"

{transforms}
{providers}
"#,
        corpus.display(),
        corpus.display()
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn jsonl_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn full_pipeline(config: &Path, out: &Path, concurrency: &str) -> (Vec<(String, Vec<u8>)>, String, String) {
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());
    ok(&["score", "--config", c, "--out", o, "--concurrency", concurrency]);
    ok(&["eval", "--config", c, "--out", o]);
    let table = ok(&["report", "--config", c, "--out", o]);
    let reports = std::fs::read_to_string(out.join("reports.jsonl")).unwrap();
    (jsonl_files(&out.join("scores")), reports, table)
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_concurrency() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixtures().join("config.toml");
    let a = full_pipeline(&config, &dir.path().join("a"), "1");
    let b = full_pipeline(&config, &dir.path().join("b"), "1");
    let c = full_pipeline(&config, &dir.path().join("c"), "8");
    assert_eq!(a.0.len(), 16);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.2.contains("Avg gap"));
    assert!(dir.path().join("a/scores/news__model-a__Likelihood.run.json").exists());
}

#[test]
fn score_filters_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixtures().join("config.toml");
    let c = c.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    let printed = ok(&["score", "--config", c, "--out", out, "--context", "wiki", "--model", "model-b", "--transform", "likelihood"]);
    assert!(printed.contains("wiki__model-b__Likelihood.jsonl"));
    assert!(printed.contains("remote calls: 0"));
    assert_eq!(jsonl_files(&dir.path().join("scores")).len(), 1);
    let f = ScoreFile::load(&dir.path().join("scores/wiki__model-b__Likelihood.jsonl")).unwrap();
    assert_eq!(f.header.n_records, 20);
    assert_eq!(f.samples.len(), 20);

    let other = tempfile::tempdir().unwrap();
    let o = other.path().to_str().unwrap();
    ok(&["score", "--config", c, "--out", o, "--seed", "99", "--context", "news", "--model", "model-a", "--transform", "detectgpt"]);
    ok(&["score", "--config", c, "--out", out, "--context", "news", "--model", "model-a", "--transform", "detectgpt"]);
    let name = "scores/news__model-a__DetectGPT.jsonl";
    let reseeded = ScoreFile::load(&other.path().join(name)).unwrap();
    let base = ScoreFile::load(&dir.path().join(name)).unwrap();
    assert_eq!(reseeded.header.run_seed, 99);
    assert_ne!(reseeded.samples, base.samples);
}

#[test]
fn proxihuman_golden_scores() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixtures().join("config.toml");
    let (c, o) = (c.to_str().unwrap(), dir.path().to_str().unwrap());
    let args = ["score", "--config", c, "--out", o, "--context", "news", "--model", "model-a", "--transform", "proxihuman"];
    ok(&args);
    let got = std::fs::read(dir.path().join("scores/news__model-a__ProxiHuman.jsonl")).unwrap();
    ok(&args);
    let again = std::fs::read(dir.path().join("scores/news__model-a__ProxiHuman.jsonl")).unwrap();
    assert_eq!(got, again);

    let golden = fixtures().join("golden/news__model-a__ProxiHuman.jsonl");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        taudetect::io::write_atomic(&golden, &got).unwrap();
    }
    assert_eq!(String::from_utf8(got).unwrap(), std::fs::read_to_string(&golden).unwrap());
}

#[test]
fn published_table_golden_rendering() {
    let reports = published_reports();
    for (format, ext) in [(Format::Plain, "txt"), (Format::Csv, "csv"), (Format::Markdown, "md")] {
        let (rendered, json) = cmd_report(&reports, &published_layout(), format).unwrap();
        let (again, json_again) = cmd_report(&reports, &published_layout(), format).unwrap();
        assert_eq!((&rendered, &json), (&again, &json_again));
        let golden = fixtures().join(format!("golden/published_table.{ext}"));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            taudetect::io::write_atomic(&golden, rendered.as_bytes()).unwrap();
        }
        assert_eq!(rendered, std::fs::read_to_string(&golden).unwrap(), "{ext}");
    }
}

#[test]
fn report_with_absent_cell_and_empty_set() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reports.jsonl");
    let mut reports = published_reports();
    reports.pop();
    taudetect::cli::write_reports(&path, &reports).unwrap();
    let o = dir.path().to_str().unwrap();
    let table = ok(&["report", "--out", o, "--format", "markdown", "--pair", "GPT3,GPT4"]);
    assert!(table.contains("—"));
    assert!(table.contains("absent cell"));
    assert!(dir.path().join("table.md").exists());
    assert!(dir.path().join("table.json").exists());

    std::fs::write(&path, "").unwrap();
    assert_eq!(ok(&["report", "--out", o]), "no reports\n");
}

#[test]
fn eval_on_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixtures().join("config.toml");
    let (c, o) = (c.to_str().unwrap(), dir.path().to_str().unwrap());
    ok(&["score", "--config", c, "--out", o, "--context", "news", "--model", "model-a", "--transform", "likelihood"]);
    let path = dir.path().join("scores/news__model-a__Likelihood.jsonl");
    let mut f = ScoreFile::load(&path).unwrap();
    // replace with the six-score example: one machine score sits among the humans
    let values = [0.1, 0.2, 0.3, 0.25, 0.35, 0.45];
    f.samples.clear();
    for (i, v) in values.iter().enumerate() {
        let label = if i < 3 { taudetect::risk::Label::Machine } else { taudetect::risk::Label::Human };
        f.samples.push(taudetect::risk::ScoredSample::new(format!("x{i}"), label, *v));
    }
    std::fs::write(&path, f.render().unwrap()).unwrap();
    let reports = cmd_eval(&[path], 0.5, &LossSpec::ZERO_ONE, None, 0).unwrap();
    assert_eq!(format!("{:.2}", reports[0].tau_hat), "0.67");
    assert_eq!(reports[0].score_file.as_deref(), Some("news__model-a__Likelihood.jsonl"));
}

#[test]
fn warm_cache_scores_offline() {
    let server = MockServer::start(|_, body| (200, completion_for(body["prompt"].as_str().unwrap())));
    let dir = tempfile::tempdir().unwrap();
    let providers = format!(
        r#"[providers]
cache = "{}"

[providers.logprobs]
kind = "remote"
endpoint_url = "{}"
model_name = "mock-lm"
backoff_base_ms = 1
chunk_chars = 120

[providers.embedding]
kind = "synthetic"

[providers.fill]
kind = "synthetic"
"#,
        dir.path().join("cache.ndjson").display(),
        server.url
    );
    let config = write_config(dir.path(), "[[transforms]]\nkind = \"likelihood\"\n", &providers);
    let c = config.to_str().unwrap();
    let cold = dir.path().join("cold");
    let warm = dir.path().join("warm");
    let printed = ok(&["score", "--config", c, "--out", cold.to_str().unwrap(), "--concurrency", "4"]);
    let hits = server.hits();
    assert!(hits > 0);
    assert!(printed.contains(&format!("remote calls: {hits}")));

    let printed = ok(&["score", "--config", c, "--out", warm.to_str().unwrap(), "--concurrency", "1"]);
    assert!(printed.contains("remote calls: 0"), "{printed}");
    assert_eq!(server.hits(), hits);
    assert_eq!(jsonl_files(&cold.join("scores")), jsonl_files(&warm.join("scores")));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(warm.join("scores/news__model-a__Likelihood.run.json")).unwrap()).unwrap();
    assert_eq!(meta["remote_calls"], 0);
    let header = ScoreFile::load(&warm.join("scores/news__model-a__Likelihood.jsonl")).unwrap().header;
    assert_eq!(header.logprob_chunking.as_deref(), Some("chunks of at most 120 chars, no overlap, summed"));
}

#[test]
fn truncated_ranks_fail_before_scoring() {
    let server = MockServer::start(|_, body| (200, completion_for(body["prompt"].as_str().unwrap())));
    let dir = tempfile::tempdir().unwrap();
    let providers = format!(
        "[providers.logprobs]\nkind = \"remote\"\nendpoint_url = \"{}\"\nmodel_name = \"mock-lm\"\n",
        server.url
    );
    let config = write_config(dir.path(), "[[transforms]]\nkind = \"logrank\"\n", &providers);
    let out = dir.path().join("out");
    let (r, _) = taudetect(&["score", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(matches!(r, Err(Error::Capability(_))), "{r:?}");
    assert_eq!(server.hits(), 0);
    assert!(!out.join("scores").exists());
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixtures().join("manifest.toml");
    let m = manifest.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let printed = ok(&["generate", "--manifest", m, "--out", a.to_str().unwrap()]);
    assert!(printed.contains("10 human, 10 machine"), "{printed}");
    ok(&["generate", "--manifest", m, "--out", b.to_str().unwrap()]);
    assert_eq!(jsonl_files(&a), jsonl_files(&b));
    let corpus = taudetect::corpus::load_corpus(a.join("news.jsonl")).unwrap();
    assert!(corpus.iter().any(|r| r.model_id() == Some("model-a")));
}

#[test]
fn perturb_writes_requested_count() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("src/human_news.jsonl");
    let o = dir.path().to_str().unwrap();
    let printed = ok(&["perturb", "--corpus", corpus.to_str().unwrap(), "--out", o, "--n-q", "3", "--seed", "5"]);
    assert!(printed.contains("30 perturbations"), "{printed}");
    let first = std::fs::read(dir.path().join("perturbations.jsonl")).unwrap();
    ok(&["perturb", "--corpus", corpus.to_str().unwrap(), "--out", o, "--n-q", "3", "--seed", "5"]);
    assert_eq!(first, std::fs::read(dir.path().join("perturbations.jsonl")).unwrap());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_taudetect");
    let dir = tempfile::tempdir().unwrap();

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "format_version = 1\nmodels = []\ncontexts = []\ntransforms = []\n").unwrap();
    let out = Process::new(bin).args(["score", "--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"exit_code\":1"), "{stderr}");

    let out = Process::new(bin)
        .args(["synth-check", "--mu1", "0", "--n", "500", "--seeds", "5", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert!(dir.path().join("oracle.jsonl").exists());

    let out = Process::new(bin)
        .args(["synth-check", "--n", "2000", "--seeds", "4", "--tolerance", "0.08", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
