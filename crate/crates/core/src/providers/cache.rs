//! Newline-delimited response cache keyed by content hash.
//!
//! Each line is one record `{hash, capability, model_name, payload, created_at}`.
//! Later records win over earlier ones with the same key. Lines that fail to
//! parse, or whose payload does not match the capability, are skipped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    EmbeddingProvider, FillOutcome, GenerationRequest, LogprobProvider, MaskFiller,
    ProviderIdentity, RankSupport, TextGenerator, TokenScore,
};
use crate::error::{Error, Result};
use crate::seed::hex_digest;
use crate::transforms::MaskedTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Logprobs,
    Embedding,
    Fill,
    Generation,
}

impl Capability {
    fn as_str(self) -> &'static str {
        match self {
            Capability::Logprobs => "logprobs",
            Capability::Embedding => "embedding",
            Capability::Fill => "fill",
            Capability::Generation => "generation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    TokenScores(Vec<TokenScore>),
    Vector(Vec<f64>),
    Text(String),
}

impl Payload {
    fn matches(&self, capability: Capability) -> bool {
        matches!(
            (self, capability),
            (Payload::TokenScores(_), Capability::Logprobs)
                | (Payload::Vector(_), Capability::Embedding)
                | (Payload::Text(_), Capability::Fill | Capability::Generation)
        )
    }

    fn to_value(&self) -> Value {
        match self {
            Payload::TokenScores(t) => serde_json::to_value(t).expect("token scores serialize"),
            Payload::Vector(v) => serde_json::to_value(v).expect("vectors serialize"),
            Payload::Text(s) => Value::String(s.clone()),
        }
    }

    fn from_value(capability: Capability, v: Value) -> Option<Payload> {
        match capability {
            Capability::Logprobs => serde_json::from_value(v).ok().map(Payload::TokenScores),
            Capability::Embedding => serde_json::from_value(v).ok().map(Payload::Vector),
            Capability::Fill | Capability::Generation => v.as_str().map(|s| Payload::Text(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub content_hash: String,
    pub capability: Capability,
    pub model_name: String,
    pub payload: Payload,
    pub created_at: String,
}

#[derive(Serialize, Deserialize)]
struct Record {
    hash: String,
    capability: Capability,
    model_name: String,
    payload: Value,
    created_at: String,
}

/// Stable key covering provider identity, capability and request text.
pub fn content_hash(identity: &ProviderIdentity, capability: Capability, text: &str) -> String {
    hex_digest(&[
        identity.kind.as_bytes(),
        identity.model_name.as_bytes(),
        identity.endpoint.as_bytes(),
        capability.as_str().as_bytes(),
        text.as_bytes(),
    ])
}

pub fn is_well_formed_hash(hash: &str) -> bool {
    hash.len() == 64 && hash.bytes().all(|b| b.is_ascii_hexdigit())
}

#[derive(Debug)]
pub struct CacheStore {
    path: PathBuf,
    entries: RwLock<HashMap<(String, Capability), Payload>>,
    writer: Mutex<File>,
}

impl CacheStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<Record>(&line).ok().and_then(|r| {
                    let cap = r.capability;
                    Payload::from_value(cap, r.payload).map(|p| (r.hash, cap, p))
                });
                match parsed {
                    Some((hash, cap, payload)) if is_well_formed_hash(&hash) => {
                        entries.insert((hash, cap), payload);
                    }
                    _ => log::warn!("{}:{}: corrupt cache entry ignored", path.display(), n + 1),
                }
            }
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(CacheStore {
            path,
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, content_hash: &str, capability: Capability) -> Option<Payload> {
        self.entries
            .read()
            .expect("cache lock")
            .get(&(content_hash.to_string(), capability))
            .cloned()
    }

    pub fn put(&self, entry: CacheEntry) -> Result<()> {
        if !is_well_formed_hash(&entry.content_hash) {
            return Err(Error::InvalidInput(format!("malformed cache hash `{}`", entry.content_hash)));
        }
        if !entry.payload.matches(entry.capability) {
            return Err(Error::InvalidInput("payload does not match capability".into()));
        }
        let record = Record {
            hash: entry.content_hash.clone(),
            capability: entry.capability,
            model_name: entry.model_name,
            payload: entry.payload.to_value(),
            created_at: entry.created_at,
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        {
            let mut w = self.writer.lock().expect("cache writer lock");
            w.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
            w.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert((entry.content_hash, entry.capability), entry.payload);
        Ok(())
    }

    fn store(&self, identity: &ProviderIdentity, cap: Capability, hash: String, payload: Payload) {
        let entry = CacheEntry {
            content_hash: hash,
            capability: cap,
            model_name: identity.model_name.clone(),
            payload,
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        if let Err(e) = self.put(entry) {
            log::warn!("cache write failed: {e}");
        }
    }
}

/// Wraps any provider with the cache. Hits never reach the inner provider.
pub struct Cached<P: ?Sized> {
    store: std::sync::Arc<CacheStore>,
    inner: std::sync::Arc<P>,
}

impl<P: ?Sized> Cached<P> {
    pub fn new(store: std::sync::Arc<CacheStore>, inner: std::sync::Arc<P>) -> Self {
        Cached { store, inner }
    }
}

impl<P: LogprobProvider + ?Sized> LogprobProvider for Cached<P> {
    fn identity(&self) -> ProviderIdentity {
        self.inner.identity()
    }

    fn rank_support(&self) -> RankSupport {
        self.inner.rank_support()
    }

    fn token_logprobs(&self, text: &str) -> Result<Vec<TokenScore>> {
        let id = self.inner.identity();
        let hash = content_hash(&id, Capability::Logprobs, text);
        if let Some(Payload::TokenScores(t)) = self.store.get(&hash, Capability::Logprobs) {
            return Ok(t);
        }
        let t = self.inner.token_logprobs(text)?;
        self.store.store(&id, Capability::Logprobs, hash, Payload::TokenScores(t.clone()));
        Ok(t)
    }

    fn remote_calls(&self) -> u64 {
        self.inner.remote_calls()
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Cached<P> {
    fn identity(&self) -> ProviderIdentity {
        self.inner.identity()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let id = self.inner.identity();
        let hash = content_hash(&id, Capability::Embedding, text);
        if let Some(Payload::Vector(v)) = self.store.get(&hash, Capability::Embedding) {
            return Ok(v);
        }
        let v = self.inner.embed(text)?;
        self.store.store(&id, Capability::Embedding, hash, Payload::Vector(v.clone()));
        Ok(v)
    }

    fn remote_calls(&self) -> u64 {
        self.inner.remote_calls()
    }
}

impl<P: MaskFiller + ?Sized> MaskFiller for Cached<P> {
    fn identity(&self) -> ProviderIdentity {
        self.inner.identity()
    }

    fn fill_masks(&self, template: &MaskedTemplate, seed: u64) -> Result<FillOutcome> {
        let id = self.inner.identity();
        let key = format!("{}\u{0}seed={seed}", template.sentinel_text());
        let hash = content_hash(&id, Capability::Fill, &key);
        if let Some(Payload::Text(text)) = self.store.get(&hash, Capability::Fill) {
            return Ok(FillOutcome { text, degraded: false });
        }
        let out = self.inner.fill_masks(template, seed)?;
        if !out.degraded {
            self.store.store(&id, Capability::Fill, hash, Payload::Text(out.text.clone()));
        }
        Ok(out)
    }

    fn remote_calls(&self) -> u64 {
        self.inner.remote_calls()
    }
}

impl<P: TextGenerator + ?Sized> TextGenerator for Cached<P> {
    fn identity(&self) -> ProviderIdentity {
        self.inner.identity()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let id = self.inner.identity();
        let key = serde_json::to_string(request)?;
        let hash = content_hash(&id, Capability::Generation, &key);
        if let Some(Payload::Text(text)) = self.store.get(&hash, Capability::Generation) {
            return Ok(text);
        }
        let text = self.inner.generate(request)?;
        self.store.store(&id, Capability::Generation, hash, Payload::Text(text.clone()));
        Ok(text)
    }

    fn remote_calls(&self) -> u64 {
        self.inner.remote_calls()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::synthetic::{CharNgramLm, SyntheticLogprobs};
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Arc;

    struct Counting {
        inner: SyntheticLogprobs,
        calls: AtomicU64,
        model: String,
    }

    impl LogprobProvider for Counting {
        fn identity(&self) -> ProviderIdentity {
            ProviderIdentity {
                kind: "counting".into(),
                model_name: self.model.clone(),
                endpoint: "mock".into(),
            }
        }
        fn rank_support(&self) -> RankSupport {
            RankSupport::Exact
        }
        fn token_logprobs(&self, text: &str) -> Result<Vec<TokenScore>> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.inner.token_logprobs(text)
        }
        fn remote_calls(&self) -> u64 {
            self.calls.load(Ordering::Relaxed)
        }
    }

    fn counting(model: &str) -> Arc<Counting> {
        Arc::new(Counting {
            inner: SyntheticLogprobs::new(Arc::new(CharNgramLm::reference())),
            calls: AtomicU64::new(0),
            model: model.into(),
        })
    }

    #[test]
    fn put_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path().join("c.jsonl")).unwrap();
        let id = ProviderIdentity::synthetic("m");
        let hash = content_hash(&id, Capability::Embedding, "hello");
        assert_eq!(store.get(&hash, Capability::Embedding), None);
        let payload = Payload::Vector(vec![0.1, 0.2 + 1e-17, -3.0]);
        store
            .put(CacheEntry {
                content_hash: hash.clone(),
                capability: Capability::Embedding,
                model_name: "m".into(),
                payload: payload.clone(),
                created_at: "2026-01-01T00:00:00Z".into(),
            })
            .unwrap();
        assert_eq!(store.get(&hash, Capability::Embedding), Some(payload.clone()));
        drop(store);
        let reopened = CacheStore::open(dir.path().join("c.jsonl")).unwrap();
        assert_eq!(reopened.get(&hash, Capability::Embedding), Some(payload));
        assert_eq!(reopened.get(&hash, Capability::Logprobs), None);
    }

    #[test]
    fn corrupt_lines_are_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let good = format!(
            r#"{{"hash":"{}","capability":"fill","model_name":"m","payload":"ok","created_at":"t"}}"#,
            "a".repeat(64)
        );
        let wrong_shape = format!(
            r#"{{"hash":"{}","capability":"embedding","model_name":"m","payload":"text","created_at":"t"}}"#,
            "b".repeat(64)
        );
        std::fs::write(&path, format!("{{not json\n{good}\n{wrong_shape}\n")).unwrap();
        let store = CacheStore::open(&path).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.get(&"a".repeat(64), Capability::Fill), Some(Payload::Text("ok".into())));
        assert_eq!(store.get(&"b".repeat(64), Capability::Embedding), None);
    }

    #[test]
    fn last_writer_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let store = CacheStore::open(&path).unwrap();
        let hash = "c".repeat(64);
        for text in ["first", "second"] {
            store
                .put(CacheEntry {
                    content_hash: hash.clone(),
                    capability: Capability::Generation,
                    model_name: "m".into(),
                    payload: Payload::Text(text.into()),
                    created_at: "t".into(),
                })
                .unwrap();
        }
        drop(store);
        let reopened = CacheStore::open(&path).unwrap();
        assert_eq!(reopened.get(&hash, Capability::Generation), Some(Payload::Text("second".into())));
    }

    #[test]
    fn warm_cache_skips_inner_provider() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let texts = ["alpha beta", "gamma delta", "epsilon"];
        let cold = counting("m1");
        {
            let cached = Cached::new(Arc::new(CacheStore::open(&path).unwrap()), cold.clone());
            for t in texts {
                cached.token_logprobs(t).unwrap();
            }
        }
        assert_eq!(cold.remote_calls(), 3);
        let warm = counting("m1");
        let cached = Cached::new(Arc::new(CacheStore::open(&path).unwrap()), warm.clone());
        let a: Vec<_> = texts.iter().map(|t| cached.token_logprobs(t).unwrap()).collect();
        assert_eq!(warm.remote_calls(), 0);
        assert_eq!(a[0], cold.token_logprobs(texts[0]).unwrap());
    }

    #[test]
    fn model_change_invalidates_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let store = Arc::new(CacheStore::open(&path).unwrap());
        Cached::new(store.clone(), counting("m1")).token_logprobs("xyz").unwrap();
        let other = counting("m2");
        Cached::new(store, other.clone()).token_logprobs("xyz").unwrap();
        assert_eq!(other.remote_calls(), 1);
    }

    #[test]
    fn malformed_hash_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path().join("c.jsonl")).unwrap();
        let err = store.put(CacheEntry {
            content_hash: "nothex".into(),
            capability: Capability::Fill,
            model_name: "m".into(),
            payload: Payload::Text("x".into()),
            created_at: "t".into(),
        });
        assert!(err.is_err());
    }
}
