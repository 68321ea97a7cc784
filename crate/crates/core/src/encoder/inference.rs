//! Backend driving an external inference process over a line-delimited JSON
//! protocol on its stdin/stdout.
//!
//! Requests and responses, one JSON object per line:
//!
//! ```text
//! {"op":"info"}                           -> {"name":..,"hidden_dim":..,"max_length":..,"mlm_head":true}
//! {"op":"embed","texts":[..]}             -> {"results":[{"embedding":[..]} | {"error":"too_long","tokens":N} | {"error":msg}]}
//! {"op":"top_tokens","texts":[..],"m":M}  -> {"results":[{"tokens":[[tok,score],..]} | {"error":..}]}
//! ```
//!
//! `scripts/mlm_server.py` implements the server side on top of a
//! pretrained masked LM; it takes the final hidden layer at the mask.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, MlmBackend, TokenScore};
use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Interpreter or executable used to launch the server.
    pub program: String,
    /// Arguments placed before the model options (typically the script path).
    pub args: Vec<String>,
    /// Model directory or hub name.
    pub model: String,
    pub max_length: usize,
    pub batch_size: usize,
    pub device: Option<String>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            program: "python3".into(),
            args: vec!["scripts/mlm_server.py".into()],
            model: "bert-base-cased".into(),
            max_length: 512,
            batch_size: 32,
            device: None,
        }
    }
}

struct ServerIo {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ServerIo {
    fn call(&mut self, request: &Value) -> Result<Value, BackendError> {
        let fail = |what: &str, e: &dyn std::fmt::Display| {
            BackendError::Failure(format!("inference server {what}: {e}"))
        };
        serde_json::to_writer(&mut self.stdin, request).map_err(|e| fail("write", &e))?;
        self.stdin.write_all(b"\n").map_err(|e| fail("write", &e))?;
        self.stdin.flush().map_err(|e| fail("write", &e))?;
        let mut line = String::new();
        let read = self.stdout.read_line(&mut line).map_err(|e| fail("read", &e))?;
        if read == 0 {
            return Err(BackendError::Failure("inference server closed its output".into()));
        }
        let response: Value = serde_json::from_str(&line).map_err(|e| fail("response", &e))?;
        if let Some(err) = response.get("fatal") {
            return Err(BackendError::Failure(format!("inference server: {err}")));
        }
        Ok(response)
    }
}

impl Drop for ServerIo {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Pretrained masked LM running in a child process. Calls are serialized.
pub struct InferenceBackend {
    config: InferenceConfig,
    name: String,
    hidden_dim: usize,
    mlm_head: bool,
    io: Mutex<ServerIo>,
}

impl std::fmt::Debug for InferenceBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InferenceBackend")
            .field("name", &self.name)
            .field("hidden_dim", &self.hidden_dim)
            .field("config", &self.config)
            .finish()
    }
}

fn parse_results(response: &Value, expected: usize) -> Result<Vec<Value>, BackendError> {
    let results = response
        .get("results")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Failure("response has no results array".into()))?;
    if results.len() != expected {
        return Err(BackendError::Failure(format!(
            "expected {expected} results, got {}",
            results.len()
        )));
    }
    Ok(results.clone())
}

impl InferenceBackend {
    pub fn spawn(config: InferenceConfig) -> Result<Self, BackendError> {
        let mut cmd = Command::new(&config.program);
        cmd.args(&config.args)
            .arg("--model")
            .arg(&config.model)
            .arg("--max-length")
            .arg(config.max_length.to_string());
        if let Some(device) = &config.device {
            cmd.arg("--device").arg(device);
        }
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Failure(format!("cannot start {}: {e}", config.program)))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut io = ServerIo {
            child,
            stdin,
            stdout,
        };

        let info = io.call(&json!({"op": "info"}))?;
        let hidden_dim = info
            .get("hidden_dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| BackendError::Failure("info response lacks hidden_dim".into()))?
            as usize;
        let name = info
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or(&config.model)
            .to_string();
        let mlm_head = info.get("mlm_head").and_then(Value::as_bool).unwrap_or(true);
        log::info!("inference backend {name} ready (hidden_dim {hidden_dim})");

        Ok(Self {
            config,
            name,
            hidden_dim,
            mlm_head,
            io: Mutex::new(io),
        })
    }

    fn request(&self, request: Value) -> Result<Value, BackendError> {
        let mut io = self
            .io
            .lock()
            .map_err(|_| BackendError::Failure("inference server lock poisoned".into()))?;
        io.call(&request)
    }

    fn item_error(prompt: &RenderedPrompt, item: &Value, max: usize) -> Option<BackendError> {
        let err = item.get("error")?;
        Some(if err == "too_long" {
            BackendError::TooLong {
                instance: prompt.source_instance_id.clone(),
                tokens: item.get("tokens").and_then(Value::as_u64).unwrap_or(0) as usize,
                max,
            }
        } else {
            BackendError::Failure(format!("{}: {err}", prompt.source_instance_id))
        })
    }

    fn embed_item(&self, prompt: &RenderedPrompt, item: &Value) -> Result<Vec<f32>, BackendError> {
        if let Some(err) = Self::item_error(prompt, item, self.config.max_length) {
            return Err(err);
        }
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Failure("result lacks embedding".into()))?;
        values
            .iter()
            .map(|v| {
                v.as_f64()
                    .map(|x| x as f32)
                    .ok_or_else(|| BackendError::Failure("non-numeric embedding value".into()))
            })
            .collect()
    }
}

impl MlmBackend for InferenceBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn is_concurrent(&self) -> bool {
        false
    }

    fn batch_size(&self) -> usize {
        self.config.batch_size
    }

    fn has_mlm_head(&self) -> bool {
        self.mlm_head
    }

    fn mask_embedding(&self, prompt: &RenderedPrompt) -> Result<Vec<f32>, BackendError> {
        self.embed_batch(std::slice::from_ref(prompt)).remove(0)
    }

    fn embed_batch(&self, prompts: &[RenderedPrompt]) -> Vec<Result<Vec<f32>, BackendError>> {
        if prompts.is_empty() {
            return Vec::new();
        }
        let texts: Vec<&str> = prompts.iter().map(|p| p.text.as_str()).collect();
        let results = self
            .request(json!({"op": "embed", "texts": texts}))
            .and_then(|r| parse_results(&r, prompts.len()));
        match results {
            Ok(items) => prompts
                .iter()
                .zip(&items)
                .map(|(p, item)| self.embed_item(p, item))
                .collect(),
            Err(e) => prompts.iter().map(|_| Err(e.clone())).collect(),
        }
    }

    fn top_tokens(&self, prompt: &RenderedPrompt, m: usize) -> Result<Vec<TokenScore>, BackendError> {
        if !self.mlm_head {
            return Err(BackendError::NoMlmHead(self.name.clone()));
        }
        let response = self.request(json!({"op": "top_tokens", "texts": [prompt.text], "m": m}))?;
        let item = parse_results(&response, 1)?.remove(0);
        if let Some(err) = Self::item_error(prompt, &item, self.config.max_length) {
            return Err(err);
        }
        let pairs = item
            .get("tokens")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Failure("result lacks tokens".into()))?;
        pairs
            .iter()
            .map(|pair| {
                let token = pair.get(0).and_then(Value::as_str);
                let score = pair.get(1).and_then(Value::as_f64);
                match (token, score) {
                    (Some(token), Some(score)) => Ok(TokenScore {
                        token: token.to_string(),
                        score: score as f32,
                    }),
                    _ => Err(BackendError::Failure("malformed token pair".into())),
                }
            })
            .collect()
    }
}
