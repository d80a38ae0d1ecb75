#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct Request {
    pub headers: Vec<String>,
    pub body: Value,
}

type Responder = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering every POST through `respond(hit_index, body)`.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<Request>>>,
}

impl MockServer {
    pub fn start(respond: impl Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let respond: Arc<Responder> = Arc::new(respond);
        let (h, r) = (hits.clone(), requests.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (h, r, respond) = (h.clone(), r.clone(), respond.clone());
                std::thread::spawn(move || {
                    let mut reader = BufReader::new(stream);
                    let mut headers = Vec::new();
                    let mut len = 0;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        if line == "\r\n" {
                            break;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                        headers.push(line.trim_end().to_string());
                    }
                    let mut body = vec![0; len];
                    reader.read_exact(&mut body).unwrap();
                    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                    let i = h.fetch_add(1, Ordering::SeqCst);
                    r.lock().unwrap().push(Request { headers, body: body.clone() });
                    let (status, text) = respond(i, &body);
                    let reply = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                        text.len()
                    );
                    let _ = reader.get_mut().write_all(reply.as_bytes());
                });
            }
        });
        MockServer { url, hits, requests }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }
}

/// Echoed-completion body for `prompt`: one token per word, logprob = -(word length)/2,
/// top-2 alternatives that include the word when its length is even.
pub fn completion_for(prompt: &str) -> String {
    let words: Vec<String> = prompt.split_whitespace().map(|w| format!(" {w}")).collect();
    let lps: Vec<Value> = words
        .iter()
        .enumerate()
        .map(|(i, w)| if i == 0 { Value::Null } else { json!(-(w.len() as f64) / 2.0) })
        .collect();
    let tops: Vec<Value> = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i == 0 {
                Value::Null
            } else if w.len() % 2 == 0 {
                json!({ w.clone(): -(w.len() as f64) / 2.0, " the": -0.1 })
            } else {
                json!({ " a": -0.2, " the": -0.1 })
            }
        })
        .collect();
    json!({"choices": [{"text": "", "logprobs": {"tokens": words, "token_logprobs": lps, "top_logprobs": tops}}]})
        .to_string()
}

use taudetect::risk::{Label, LossSpec, ScoredSample};

/// Minimum risk over every partition a threshold rule can produce: for each
/// orientation, thresholds at every observed score and at +∞.
pub fn brute_force_min_risk(samples: &[ScoredSample], pi: f64, loss: &LossSpec) -> f64 {
    let n0 = samples.iter().filter(|s| s.label == Label::Machine).count();
    let n1 = samples.len() - n0;
    let w0 = pi * loss.beta;
    let w1 = (1.0 - pi) * loss.alpha;
    let mut thresholds: Vec<f64> = samples.iter().map(|s| s.score).collect();
    thresholds.push(f64::INFINITY);
    let mut best = f64::INFINITY;
    for &t in &thresholds {
        for low_is_machine in [true, false] {
            let mut machine_errors = 0;
            let mut human_errors = 0;
            for s in samples {
                let called_machine = (s.score < t) == low_is_machine;
                match (s.label, called_machine) {
                    (Label::Machine, false) => machine_errors += 1,
                    (Label::Human, true) => human_errors += 1,
                    _ => {}
                }
            }
            let r = w0 * (machine_errors as f64 / n0 as f64) + w1 * (human_errors as f64 / n1 as f64);
            best = best.min(r);
        }
    }
    best
}

/// kNN mean distance by sorting all distances.
pub fn knn_sort_oracle(y: &[f64], ys: &[Vec<f64>], k: usize, cosine: bool) -> f64 {
    let mut d: Vec<f64> = ys
        .iter()
        .map(|v| {
            if cosine {
                let dot: f64 = y.iter().zip(v).map(|(a, b)| a * b).sum();
                let na = y.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nb = v.iter().map(|b| b * b).sum::<f64>().sqrt();
                1.0 - dot / (na * nb)
            } else {
                y.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d[..k].iter().sum::<f64>() / k as f64
}

pub fn samples_from(machine: &[f64], human: &[f64]) -> Vec<ScoredSample> {
    machine
        .iter()
        .enumerate()
        .map(|(i, &s)| ScoredSample::new(format!("m{i:04}"), Label::Machine, s))
        .chain(human.iter().enumerate().map(|(i, &s)| ScoredSample::new(format!("h{i:04}"), Label::Human, s)))
        .collect()
}

pub const PUBLISHED_CONTEXTS: [&str; 4] = ["PubMed", "WritingPrompts", "XSum", "Wiki"];
pub const PUBLISHED_ROWS: [&str; 4] = ["Likelihood", "LogRank", "DetectGPT", "ProxiHuman"];

/// Published cells as `[row][context][GPT3, GPT4]`.
pub const PUBLISHED_CELLS: [[[f64; 2]; 4]; 4] = [
    [[0.60, 0.31], [0.95, 0.63], [0.88, 0.64], [0.96, 0.60]],
    [[0.58, 0.33], [0.94, 0.54], [0.72, 0.66], [0.96, 0.55]],
    [[0.49, 0.21], [0.60, 0.33], [0.42, 0.24], [0.68, 0.52]],
    [[0.41, 0.26], [0.26, 0.16], [0.31, 0.12], [0.64, 0.29]],
];

pub fn published_reports() -> Vec<taudetect::risk::TauReport> {
    let mut out = Vec::new();
    for (r, row) in PUBLISHED_ROWS.iter().enumerate() {
        for (c, ctx) in PUBLISHED_CONTEXTS.iter().enumerate() {
            for (m, model) in ["GPT3", "GPT4"].iter().enumerate() {
                out.push(taudetect::report::cell_report(ctx, model, row, PUBLISHED_CELLS[r][c][m]));
            }
        }
    }
    out
}

pub fn published_layout() -> taudetect::report::TableLayout {
    taudetect::report::TableLayout {
        contexts: PUBLISHED_CONTEXTS.iter().map(|s| s.to_string()).collect(),
        models: vec!["GPT3".into(), "GPT4".into()],
        transforms: PUBLISHED_ROWS.iter().map(|s| s.to_string()).collect(),
        model_pair: Some(("GPT3".into(), "GPT4".into())),
    }
}
