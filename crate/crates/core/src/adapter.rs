//! External model adapter: a subprocess speaking length-prefixed frames over
//! stdin/stdout.
//!
//! Every frame is a `u32` little-endian byte count followed by that many
//! bytes: one JSON header line terminated by `\n`, then a raw payload of
//! little-endian `f32` values. The client opens with
//! `{"op":"hello","version":1}` and expects the same version back. Requests
//! are strictly one in flight.

use std::io::{self, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::objective::{BoundingBox, NaturalImage};

pub const PROTOCOL_VERSION: u32 = 1;

/// Frames larger than this are rejected as corrupt.
pub const MAX_FRAME_BYTES: usize = 1 << 30;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("[E_HANDSHAKE] {0}")]
    Handshake(String),
    #[error("[E_VERSION] adapter speaks version {got}, expected {expected}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("[E_TIMEOUT] no response within {0:?}")]
    Timeout(Duration),
    #[error("[E_SHAPE] {0}")]
    ShapeMismatch(String),
    #[error("[E_NONFINITE] {0}")]
    NonFinite(String),
    #[error("[E_TRANSPORT] {0}")]
    Transport(String),
    #[error("[E_PROTOCOL] {0}")]
    Protocol(String),
    #[error("[E_REMOTE] adapter reported: {0}")]
    Remote(String),
}

impl AdapterError {
    pub fn code(&self) -> &'static str {
        match self {
            AdapterError::Handshake(_) => "E_HANDSHAKE",
            AdapterError::VersionMismatch { .. } => "E_VERSION",
            AdapterError::Timeout(_) => "E_TIMEOUT",
            AdapterError::ShapeMismatch(_) => "E_SHAPE",
            AdapterError::NonFinite(_) => "E_NONFINITE",
            AdapterError::Transport(_) => "E_TRANSPORT",
            AdapterError::Protocol(_) => "E_PROTOCOL",
            AdapterError::Remote(_) => "E_REMOTE",
        }
    }
}

/// A decoded frame: JSON header plus `f32` payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub header: Value,
    pub payload: Vec<f32>,
}

impl Frame {
    pub fn new(header: Value, payload: Vec<f32>) -> Self {
        Self { header, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = serde_json::to_vec(&self.header).expect("header serializes");
        body.push(b'\n');
        body.reserve(self.payload.len() * 4);
        for v in &self.payload {
            body.extend_from_slice(&v.to_le_bytes());
        }
        let mut out = Vec::with_capacity(body.len() + 4);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn decode_body(body: &[u8]) -> Result<Self, AdapterError> {
        let nl = body
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| AdapterError::Protocol("frame has no header line".into()))?;
        let header: Value = serde_json::from_slice(&body[..nl])
            .map_err(|e| AdapterError::Protocol(format!("bad header JSON: {e}")))?;
        let raw = &body[nl + 1..];
        if raw.len() % 4 != 0 {
            return Err(AdapterError::Protocol(format!(
                "payload of {} bytes is not a whole number of f32 values",
                raw.len()
            )));
        }
        let payload = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self { header, payload })
    }
}

pub fn write_frame(out: &mut impl Write, frame: &Frame) -> io::Result<()> {
    out.write_all(&frame.encode())?;
    out.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream before the length prefix.
pub fn read_frame(input: &mut impl Read) -> Result<Option<Frame>, AdapterError> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(AdapterError::Transport(e.to_string())),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(AdapterError::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    input
        .read_exact(&mut body)
        .map_err(|e| AdapterError::Transport(format!("truncated frame: {e}")))?;
    Frame::decode_body(&body).map(Some)
}

/// What a forward/backward request asks the adapter to compute.
#[derive(Clone, Debug, PartialEq)]
pub enum RequestKind {
    /// Cross-entropy of `target`; scores are class probabilities.
    Classify { target: usize },
    /// `Σ -log(1 - o_j)` over the objectness of each box; scores are `o_j`.
    Detect { boxes: Vec<BoundingBox> },
}

/// Reply to a forward/backward request.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterResponse {
    pub loss: f64,
    pub scores: Vec<f64>,
    /// `∂loss/∂pixels`, laid out like the request image.
    pub grad: Vec<f64>,
}

#[derive(Deserialize)]
struct ResponseHeader {
    loss: Option<f64>,
    #[serde(default)]
    scores: Vec<f64>,
    grad_shape: Option<[usize; 3]>,
    error: Option<String>,
}

/// How to launch an adapter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// A live adapter process after a successful handshake.
pub struct AdapterClient {
    child: Child,
    stdin: ChildStdin,
    frames: Receiver<Result<Option<Frame>, AdapterError>>,
    timeout: Duration,
    dead: bool,
}

impl AdapterClient {
    pub fn spawn(cmd: &AdapterCommand) -> Result<Self, AdapterError> {
        let mut command = Command::new(&cmd.program);
        command.args(&cmd.args);
        Self::spawn_command(command, Duration::from_millis(cmd.timeout_ms))
    }

    pub fn spawn_command(mut command: Command, timeout: Duration) -> Result<Self, AdapterError> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AdapterError::Transport(format!("cannot start adapter: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let (tx, frames) = mpsc::channel();
        thread::spawn(move || loop {
            let frame = read_frame(&mut stdout);
            let stop = !matches!(frame, Ok(Some(_)));
            if tx.send(frame).is_err() || stop {
                break;
            }
        });
        let mut client = Self { child, stdin, frames, timeout, dead: false };
        client.handshake()?;
        Ok(client)
    }

    fn handshake(&mut self) -> Result<(), AdapterError> {
        let hello = Frame::new(json!({"op": "hello", "version": PROTOCOL_VERSION}), vec![]);
        let reply = self.exchange(&hello).map_err(|e| match e {
            AdapterError::Transport(m) | AdapterError::Protocol(m) => AdapterError::Handshake(m),
            other => other,
        })?;
        if reply.header.get("op").and_then(Value::as_str) != Some("hello") {
            return Err(self.fail(AdapterError::Handshake(format!(
                "expected hello reply, got {}",
                reply.header
            ))));
        }
        let got = reply
            .header
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| AdapterError::Handshake("hello reply has no version".into()))?;
        if got != PROTOCOL_VERSION as u64 {
            return Err(self.fail(AdapterError::VersionMismatch {
                expected: PROTOCOL_VERSION,
                got: got as u32,
            }));
        }
        Ok(())
    }

    fn fail(&mut self, err: AdapterError) -> AdapterError {
        self.dead = true;
        let _ = self.child.kill();
        err
    }

    fn exchange(&mut self, frame: &Frame) -> Result<Frame, AdapterError> {
        if self.dead {
            return Err(AdapterError::Transport("adapter is no longer running".into()));
        }
        if let Err(e) = write_frame(&mut self.stdin, frame) {
            return Err(self.fail(AdapterError::Transport(format!("write failed: {e}"))));
        }
        match self.frames.recv_timeout(self.timeout) {
            Ok(Ok(Some(f))) => Ok(f),
            Ok(Ok(None)) => Err(self.fail(AdapterError::Transport("adapter closed its output".into()))),
            Ok(Err(e)) => Err(self.fail(e)),
            Err(RecvTimeoutError::Timeout) => Err(self.fail(AdapterError::Timeout(self.timeout))),
            Err(RecvTimeoutError::Disconnected) => {
                Err(self.fail(AdapterError::Transport("adapter reader stopped".into())))
            }
        }
    }

    /// Sends `image`, returns loss, scores and the pixel gradient.
    pub fn forward_backward(
        &mut self,
        image: &NaturalImage,
        kind: &RequestKind,
    ) -> Result<AdapterResponse, AdapterError> {
        let mut header = json!({
            "op": "forward_backward",
            "h": image.height,
            "w": image.width,
            "ch": image.channels,
        });
        match kind {
            RequestKind::Classify { target } => {
                header["mode"] = json!("classify");
                header["target"] = json!(target);
            }
            RequestKind::Detect { boxes } => {
                header["mode"] = json!("detect");
                header["boxes"] = json!(boxes.iter().map(|b| [b.cx, b.cy, b.w, b.h]).collect::<Vec<_>>());
            }
        }
        let payload = image.values.iter().map(|&v| v as f32).collect();
        let reply = self.exchange(&Frame::new(header, payload))?;
        let head: ResponseHeader = serde_json::from_value(reply.header.clone())
            .map_err(|e| AdapterError::Protocol(format!("bad response header: {e}")))?;
        if let Some(msg) = head.error {
            return Err(AdapterError::Remote(msg));
        }
        let loss = head
            .loss
            .ok_or_else(|| AdapterError::Protocol("response lacks loss".into()))?;
        let shape = head
            .grad_shape
            .ok_or_else(|| AdapterError::Protocol("response lacks grad_shape".into()))?;
        if shape != image.shape() {
            return Err(AdapterError::ShapeMismatch(format!(
                "gradient shape {shape:?} does not match image {:?}",
                image.shape()
            )));
        }
        if reply.payload.len() != image.values.len() {
            return Err(AdapterError::ShapeMismatch(format!(
                "gradient payload has {} values, expected {}",
                reply.payload.len(),
                image.values.len()
            )));
        }
        if !loss.is_finite() || head.scores.iter().any(|s| !s.is_finite()) {
            return Err(AdapterError::NonFinite(format!("loss {loss}, scores {:?}", head.scores)));
        }
        if let Some(i) = reply.payload.iter().position(|v| !v.is_finite()) {
            return Err(AdapterError::NonFinite(format!("gradient entry {i} is {}", reply.payload[i])));
        }
        if let RequestKind::Detect { boxes } = kind {
            if head.scores.len() != boxes.len() {
                return Err(AdapterError::ShapeMismatch(format!(
                    "{} scores for {} boxes",
                    head.scores.len(),
                    boxes.len()
                )));
            }
        }
        Ok(AdapterResponse {
            loss,
            scores: head.scores,
            grad: reply.payload.iter().map(|&v| v as f64).collect(),
        })
    }

    pub fn is_alive(&self) -> bool {
        !self.dead
    }
}

impl Drop for AdapterClient {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl std::fmt::Debug for AdapterClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterClient")
            .field("pid", &self.child.id())
            .field("timeout", &self.timeout)
            .field("dead", &self.dead)
            .finish()
    }
}
