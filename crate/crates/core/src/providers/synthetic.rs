//! Offline, fully deterministic providers. Not scientific surrogates.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    EmbeddingProvider, FillOutcome, GenerationRequest, LogprobProvider, MaskFiller,
    ProviderIdentity, RankSupport, TextGenerator, TokenScore,
};
use crate::error::{Error, Result};
use crate::transforms::{tokenize, MaskedTemplate};

pub const REFERENCE_CORPUS: &str = include_str!("../../data/reference_corpus.txt");

const BOS: char = '\u{2}';
const UNK: char = '\u{FFFD}';

/// Order-3 character model with add-one smoothing over the training alphabet
/// plus one unknown symbol.
#[derive(Debug, Clone)]
pub struct CharNgramLm {
    vocab: Vec<char>,
    counts: HashMap<(char, char), HashMap<char, u32>>,
    totals: HashMap<(char, char), u32>,
    // sorted continuation tables for sampling: trigram, bigram, unigram
    next2: HashMap<(char, char), Vec<(char, u32)>>,
    next1: HashMap<char, Vec<(char, u32)>>,
    next0: Vec<(char, u32)>,
}

fn sorted_table(m: HashMap<char, u32>) -> Vec<(char, u32)> {
    let mut v: Vec<(char, u32)> = m.into_iter().collect();
    v.sort();
    v
}

impl CharNgramLm {
    pub fn fit(corpus: &str) -> Self {
        let mut alphabet: BTreeSet<char> = corpus.chars().filter(|c| *c != '\n' && *c != '\r').collect();
        alphabet.insert(UNK);
        let mut counts: HashMap<(char, char), HashMap<char, u32>> = HashMap::new();
        let mut totals: HashMap<(char, char), u32> = HashMap::new();
        for line in corpus.lines().filter(|l| !l.is_empty()) {
            let mut ctx = (BOS, BOS);
            for c in line.chars() {
                *counts.entry(ctx).or_default().entry(c).or_default() += 1;
                *totals.entry(ctx).or_default() += 1;
                ctx = (ctx.1, c);
            }
        }
        let mut next1: HashMap<char, HashMap<char, u32>> = HashMap::new();
        let mut next0: HashMap<char, u32> = HashMap::new();
        for (ctx, m) in &counts {
            for (&c, &n) in m {
                *next1.entry(ctx.1).or_default().entry(c).or_default() += n;
                *next0.entry(c).or_default() += n;
            }
        }
        CharNgramLm {
            vocab: alphabet.into_iter().collect(),
            next2: counts.iter().map(|(k, m)| (*k, sorted_table(m.clone()))).collect(),
            next1: next1.into_iter().map(|(k, m)| (k, sorted_table(m))).collect(),
            next0: sorted_table(next0),
            counts,
            totals,
        }
    }

    pub fn reference() -> Self {
        Self::fit(REFERENCE_CORPUS)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn normalize(&self, c: char) -> char {
        if self.vocab.binary_search(&c).is_ok() {
            c
        } else {
            UNK
        }
    }

    fn count(&self, ctx: (char, char), c: char) -> u32 {
        self.counts
            .get(&ctx)
            .and_then(|m| m.get(&c))
            .copied()
            .unwrap_or(0)
    }

    fn logprob(&self, ctx: (char, char), c: char) -> f64 {
        let total = self.totals.get(&ctx).copied().unwrap_or(0);
        ((self.count(ctx, c) + 1) as f64 / (total as f64 + self.vocab.len() as f64)).ln()
    }

    /// 1 + number of vocabulary symbols strictly more likely in this context.
    fn rank(&self, ctx: (char, char), c: char) -> u32 {
        let own = self.count(ctx, c);
        let above = self
            .counts
            .get(&ctx)
            .map_or(0, |m| m.values().filter(|&&n| n > own).count());
        1 + above as u32
    }

    /// One score per character.
    pub fn score(&self, text: &str) -> Vec<TokenScore> {
        let mut ctx = (BOS, BOS);
        text.chars()
            .map(|raw| {
                let c = self.normalize(raw);
                let ts = TokenScore::new(raw.to_string(), self.logprob(ctx, c), Some(self.rank(ctx, c)));
                ctx = (ctx.1, c);
                ts
            })
            .collect()
    }

    /// Sample a continuation of `prompt` containing `words` whitespace-separated words.
    ///
    /// Sampling uses raw counts of the longest observed context, backing off
    /// to shorter ones, so the output stays close to the training text.
    pub fn sample(&self, prompt: &str, words: usize, seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctx = (BOS, BOS);
        for c in prompt.chars() {
            ctx = (ctx.1, self.normalize(c));
        }
        let mut out = String::new();
        let mut produced = 0;
        let mut in_word = false;
        let cap = words.saturating_mul(40).max(1);
        for _ in 0..cap {
            if produced >= words || self.next0.is_empty() {
                break;
            }
            let table = self
                .next2
                .get(&ctx)
                .or_else(|| self.next1.get(&ctx.1))
                .unwrap_or(&self.next0);
            let dist = WeightedIndex::new(table.iter().map(|(_, n)| *n)).expect("observed counts are positive");
            let c = table[dist.sample(&mut rng)].0;
            if c.is_whitespace() {
                if in_word {
                    produced += 1;
                    in_word = false;
                }
                if out.is_empty() || out.ends_with(char::is_whitespace) {
                    ctx = (ctx.1, c);
                    continue;
                }
            } else {
                in_word = true;
            }
            out.push(c);
            ctx = (ctx.1, c);
        }
        out.trim_end().to_string()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLogprobs {
    lm: Arc<CharNgramLm>,
}

impl SyntheticLogprobs {
    pub fn new(lm: Arc<CharNgramLm>) -> Self {
        SyntheticLogprobs { lm }
    }
}

impl LogprobProvider for SyntheticLogprobs {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity::synthetic("char-trigram-add-one")
    }

    fn rank_support(&self) -> RankSupport {
        RankSupport::Exact
    }

    fn token_logprobs(&self, text: &str) -> Result<Vec<TokenScore>> {
        if text.is_empty() {
            return Err(Error::InvalidInput("cannot score empty text".into()));
        }
        Ok(self.lm.score(text))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// L2-normalised frequency vector of hashed character 1- to 3-grams.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    pub dim: usize,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        HashedNgramEmbedder { dim: 256 }
    }
}

impl EmbeddingProvider for HashedNgramEmbedder {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity::synthetic(&format!("hashed-char-ngram-{}", self.dim))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let chars: Vec<char> = text.chars().collect();
        let mut v = vec![0.0; self.dim];
        let mut buf = String::new();
        for n in 1..=3 {
            for w in chars.windows(n) {
                buf.clear();
                buf.extend(w);
                let slot = (fnv1a(buf.as_bytes()) % self.dim as u64) as usize;
                v[slot] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }
}

/// Fills masks with words drawn from a unigram distribution.
#[derive(Debug, Clone)]
pub struct UnigramFiller {
    words: Vec<String>,
    dist: WeightedIndex<u32>,
}

impl UnigramFiller {
    pub fn fit(corpus: &str) -> Result<Self> {
        let mut counts: HashMap<String, u32> = HashMap::new();
        for w in tokenize(corpus) {
            *counts.entry(w).or_default() += 1;
        }
        Self::from_counts(counts.into_iter().collect())
    }

    pub fn from_counts(mut counts: Vec<(String, u32)>) -> Result<Self> {
        counts.retain(|(_, n)| *n > 0);
        counts.sort();
        if counts.is_empty() {
            return Err(Error::InvalidInput("filler vocabulary is empty".into()));
        }
        let dist = WeightedIndex::new(counts.iter().map(|(_, n)| *n))
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(UnigramFiller {
            words: counts.into_iter().map(|(w, _)| w).collect(),
            dist,
        })
    }

    pub fn reference() -> Self {
        Self::fit(REFERENCE_CORPUS).expect("bundled corpus is non-empty")
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> &str {
        &self.words[self.dist.sample(rng)]
    }
}

impl MaskFiller for UnigramFiller {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity::synthetic("unigram-filler")
    }

    fn fill_masks(&self, template: &MaskedTemplate, seed: u64) -> Result<FillOutcome> {
        if template.positions.is_empty() {
            return Err(Error::InvalidInput("template has no masks".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fills: Vec<Vec<String>> = template
            .spans
            .iter()
            .map(|&(a, b)| (a..b).map(|_| self.draw(&mut rng).to_string()).collect())
            .collect();
        let unchanged = template.spans.iter().zip(&fills).all(|(&(a, b), fill)| {
            fill.iter().zip(&template.tokens[a..b]).all(|(x, y)| x == y)
        });
        if unchanged && self.words.len() >= 2 {
            let (a, _) = template.spans[0];
            let original = &template.tokens[a];
            loop {
                let w = self.draw(&mut rng);
                if w != original {
                    fills[0][0] = w.to_string();
                    break;
                }
            }
        }
        Ok(FillOutcome {
            text: template.apply(&fills)?,
            degraded: false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    lm: Arc<CharNgramLm>,
}

impl SyntheticGenerator {
    pub fn new(lm: Arc<CharNgramLm>) -> Self {
        SyntheticGenerator { lm }
    }
}

impl TextGenerator for SyntheticGenerator {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity::synthetic("char-trigram-add-one")
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        if request.prompt.is_empty() {
            return Err(Error::InvalidInput("prompt must be non-empty".into()));
        }
        let seed = request
            .seed_hint
            .unwrap_or_else(|| crate::seed::derive_seed(0, &request.prompt));
        Ok(self.lm.sample(&request.prompt, request.max_tokens.max(1), seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{dissimilarity, Metric};
    use rand::Rng;

    fn mean_logprob(lm: &CharNgramLm, text: &str) -> f64 {
        let s = lm.score(text);
        s.iter().map(|t| t.logprob).sum::<f64>() / s.len() as f64
    }

    #[test]
    fn degenerate_lm_ranks_one() {
        let lm = CharNgramLm::fit("aaaaaaaa");
        assert!(lm.score("aaaa").iter().all(|t| t.rank == Some(1)));
    }

    #[test]
    fn training_text_beats_uniform_noise() {
        let lm = CharNgramLm::reference();
        let alphabet: Vec<char> = REFERENCE_CORPUS.chars().filter(|c| *c != '\n').collect::<BTreeSet<_>>().into_iter().collect();
        let natural: String = REFERENCE_CORPUS.lines().next().unwrap().chars().take(300).collect();
        assert!(natural.chars().count() >= 200);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let noise: String = (0..300).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            assert!(mean_logprob(&lm, &natural) > mean_logprob(&lm, &noise));
        }
    }

    #[test]
    fn unseen_characters_are_scored() {
        let lm = CharNgramLm::reference();
        let s = lm.score("zebra \u{263A}");
        assert_eq!(s.len(), 7);
        assert!(s.iter().all(|t| t.logprob.is_finite() && t.rank.unwrap() >= 1));
    }

    #[test]
    fn embedding_is_deterministic_and_normalised() {
        let e = HashedNgramEmbedder::default();
        let a = e.embed("the quick brown fox").unwrap();
        let b = e.embed("the quick brown fox").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 256);
        assert!(dissimilarity(&a, &b, Metric::CosineDistance).unwrap().abs() < 1e-12);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn substituted_text_stays_closer_than_unrelated_text() {
        let e = HashedNgramEmbedder::default();
        let lines: Vec<&str> = REFERENCE_CORPUS.lines().collect();
        let letters: Vec<char> = ('a'..='z').collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut wins = 0;
        for trial in 0..100 {
            let base = lines[trial % lines.len()];
            let other = lines[(trial + 3) % lines.len()];
            let mut chars: Vec<char> = base.chars().collect();
            let n = chars.len();
            for idx in rand::seq::index::sample(&mut rng, n, n / 10) {
                chars[idx] = letters[rng.random_range(0..letters.len())];
            }
            let noisy: String = chars.into_iter().collect();
            let y = e.embed(base).unwrap();
            let near = dissimilarity(&y, &e.embed(&noisy).unwrap(), Metric::CosineDistance).unwrap();
            let far = dissimilarity(&y, &e.embed(other).unwrap(), Metric::CosineDistance).unwrap();
            if near < far {
                wins += 1;
            }
        }
        assert!(wins >= 95, "only {wins}/100");
    }

    fn template(tokens: &[&str], positions: Vec<usize>) -> MaskedTemplate {
        MaskedTemplate::from_positions(tokens.iter().map(|s| s.to_string()).collect(), positions)
            .unwrap()
    }

    #[test]
    fn filler_is_deterministic_and_local() {
        let f = UnigramFiller::reference();
        let t = template(&["one", "two", "three", "four", "five"], vec![1, 3]);
        let a = f.fill_masks(&t, 17).unwrap();
        let b = f.fill_masks(&t, 17).unwrap();
        assert_eq!(a, b);
        let out = tokenize(&a.text);
        assert_eq!(out.len(), 5);
        assert_eq!((out[0].as_str(), out[2].as_str(), out[4].as_str()), ("one", "three", "five"));
        assert_ne!(a.text, t.original_text());
    }

    #[test]
    fn different_seeds_usually_differ() {
        let f = UnigramFiller::from_counts(vec![("a".into(), 1), ("b".into(), 1), ("c".into(), 1)]).unwrap();
        let t = template(&["x", "y", "z"], vec![0, 2]);
        let trials = 2000;
        let differing = (0..trials)
            .filter(|&i| {
                let a = f.fill_masks(&t, 2 * i).unwrap().text;
                let b = f.fill_masks(&t, 2 * i + 1).unwrap().text;
                a != b
            })
            .count();
        // combinatorial bound 1 - (1/3)^2 = 0.889; allow 3 sigma of sampling noise
        let bound = 1.0 - 1.0 / 9.0 - 3.0 * (0.1 / trials as f64).sqrt();
        assert!(differing as f64 / trials as f64 >= bound, "{differing}/{trials}");
    }

    #[test]
    fn filler_all_masked_tiny_vocab() {
        let f = UnigramFiller::from_counts(vec![("a".into(), 2), ("b".into(), 1)]).unwrap();
        let t = template(&["a", "a", "a", "a"], vec![0, 1, 2, 3]);
        let out = f.fill_masks(&t, 3).unwrap().text;
        let toks = tokenize(&out);
        assert_eq!(toks.len(), 4);
        assert!(toks.iter().all(|w| w == "a" || w == "b"));
        assert_ne!(out, "a a a a");
    }

    #[test]
    fn generator_contract() {
        let g = SyntheticGenerator::new(Arc::new(CharNgramLm::reference()));
        let req = GenerationRequest {
            prompt: "Once upon a time".into(),
            max_tokens: 12,
            temperature: None,
            seed_hint: Some(4),
        };
        let a = g.generate(&req).unwrap();
        assert_eq!(a, g.generate(&req).unwrap());
        assert_eq!(tokenize(&a).len(), 12);
        let empty = GenerationRequest { prompt: String::new(), ..req };
        assert!(matches!(g.generate(&empty), Err(Error::InvalidInput(_))));
    }
}
