// Token log-probabilities and ranks from a completions endpoint.
//
// A throwaway local server stands in for the endpoint. To use a real one, set
// `endpoint_url` and put the token in the variable named by `auth_token_env`.
//
// ```bash
// cargo run --example remote_logprobs
// ```

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use taudetect::providers::remote::{ProviderConfig, RemoteLogprobs};
use taudetect::providers::LogprobProvider;

const RESPONSE: &str = r#"{"choices":[{"text":"","logprobs":{
  "tokens":["The"," cat"," sat"],
  "token_logprobs":[null,-2.5,-0.7],
  "top_logprobs":[null,{" dog":-1.9," cat":-2.5},{" on":-1.4," down":-2.0}]}}]}"#;

fn serve_once(listener: TcpListener) {
    let (stream, _) = listener.accept().expect("accept");
    let mut reader = BufReader::new(stream);
    let mut len = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).expect("read header");
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap_or(0);
        }
        if line == "\r\n" || line.is_empty() {
            break;
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).expect("read body");
    let reply = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{RESPONSE}",
        RESPONSE.len()
    );
    reader.get_mut().write_all(reply.as_bytes()).expect("write");
}

pub fn run_example() -> taudetect::Result<()> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| taudetect::Error::io("127.0.0.1:0", e))?;
    let url = format!("http://{}/v1/completions", listener.local_addr().expect("bound"));
    let server = std::thread::spawn(move || serve_once(listener));

    let mut config = ProviderConfig::new(url, "demo-model");
    config.top_k_logprobs = 2;
    let provider = RemoteLogprobs::new(config)?;
    for t in provider.token_logprobs("The cat sat")? {
        println!("{:>6} logprob {:>5} rank {:?}{}", t.token_text, t.logprob, t.rank, if t.rank_truncated { " (at least)" } else { "" });
    }
    println!("requests sent: {}", provider.remote_calls());
    server.join().expect("server thread");
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
