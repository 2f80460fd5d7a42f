#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

use fact_core::retriever::TemplateId;
use serde_json::Value;

pub struct GoldenCase {
    pub file: &'static str,
    pub template: TemplateId,
    pub query: &'static str,
    pub context: &'static str,
}

pub fn golden_cases() -> Vec<GoldenCase> {
    vec![
        GoldenCase {
            file: "ruler_magic_numbers.txt",
            template: TemplateId::RulerMagicNumbers,
            query: "alpha-key",
            context: "Grass is green. One of the special magic numbers for alpha-key is: 1234567. The sky is blue.",
        },
        GoldenCase {
            file: "counting_stars.txt",
            template: TemplateId::CountingStars,
            query: "",
            context:
                "Grass is green.\nThe little penguin counted 3 ★\nThe sky is blue.\nThe little penguin counted 9 ★",
        },
        GoldenCase {
            file: "generic_qa_retrieval.txt",
            template: TemplateId::GenericQaRetrieval,
            query: "Who wrote the novel?",
            context: "Passage 1:\nThe novel was written by Jane Doe.\n\nPassage 2:\nIt was published in 1901.",
        },
    ]
}

pub fn golden_path(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file)
}

/// A reply from the stub server: status code and raw body.
pub type Reply = (u16, String);

/// Chat-completions body whose message content is `content`.
pub fn completion(content: &str) -> String {
    serde_json::json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "user", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

/// Minimal HTTP/1.1 server answering one request per connection. The
/// handler sees the request index and the parsed JSON body.
pub struct StubServer {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<(String, Value)>>>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &Value) -> Reply + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let base_url = format!("http://{}", listener.local_addr().expect("addr"));
        let requests: Arc<Mutex<Vec<(String, Value)>>> = Arc::default();
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().expect("clone"));
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some((name, value)) = line.split_once(':') {
                        if name.eq_ignore_ascii_case("content-length") {
                            length = value.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0; length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                let json: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let index = {
                    let mut log = log.lock().unwrap();
                    log.push((request_line.trim().to_string(), json.clone()));
                    log.len() - 1
                };
                let (status, reply) = handler(index, &json);
                let head = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reply.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(reply.as_bytes());
                let _ = stream.flush();
            }
        });
        Self { base_url, requests }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

/// The prompt text of a chat-completions request body.
pub fn prompt_of(body: &Value) -> &str {
    body.pointer("/messages/0/content").and_then(Value::as_str).unwrap_or("")
}
