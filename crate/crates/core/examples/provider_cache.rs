// A content-addressed cache in front of a provider: the second pass makes no inner calls.
//
// ```bash
// cargo run --example provider_cache
// ```

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use taudetect::providers::cache::{CacheStore, Cached};
use taudetect::providers::synthetic::HashedNgramEmbedder;
use taudetect::providers::{EmbeddingProvider, ProviderIdentity};

struct Counted {
    inner: HashedNgramEmbedder,
    calls: AtomicU64,
}

impl EmbeddingProvider for Counted {
    fn identity(&self) -> ProviderIdentity {
        self.inner.identity()
    }
    fn embed(&self, text: &str) -> taudetect::Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.embed(text)
    }
    fn remote_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

pub fn run_example() -> taudetect::Result<()> {
    let path = std::env::temp_dir().join(format!("taudetect-cache-example-{}.ndjson", std::process::id()));
    let _ = std::fs::remove_file(&path);
    let texts = ["granite is a coarse rock", "basalt is a fine rock", "granite is a coarse rock"];

    let counted = Arc::new(Counted { inner: HashedNgramEmbedder::default(), calls: AtomicU64::new(0) });
    let cached = Cached::new(Arc::new(CacheStore::open(&path)?), counted.clone());
    for t in texts {
        cached.embed(t)?;
    }
    println!("cold pass: {} inner calls", counted.remote_calls());

    let reopened = Cached::new(Arc::new(CacheStore::open(&path)?), counted.clone());
    let before = counted.remote_calls();
    for t in texts {
        reopened.embed(t)?;
    }
    println!("warm pass: {} inner calls", counted.remote_calls() - before);
    std::fs::remove_file(&path).map_err(|e| taudetect::Error::io(&path, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
