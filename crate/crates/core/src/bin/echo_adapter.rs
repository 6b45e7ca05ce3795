//! Reference model adapter for tests and protocol debugging.
//!
//! Answers every request with `loss = mean(image)`, `scores = [loss]` (one
//! per box in detect mode) and a uniform gradient `1/(H·W·C)`. Flags inject
//! faults:
//!
//! ```text
//! --mirror         gradient payload is the request image itself
//! --version N      answer the handshake with version N
//! --hang-hello     never answer the handshake
//! --hang           never answer a forward_backward request
//! --wrong-shape    report grad_shape with H and W swapped and one value short
//! --nan            put a NaN in the gradient
//! --die            exit without replying to the first request
//! --error MSG      reply to requests with {"error": MSG}
//! ```

use std::io::{self, BufReader, BufWriter};
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use fourier_shapes::adapter::{read_frame, write_frame, Frame, PROTOCOL_VERSION};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "fshape-echo-adapter", about = "Echo model adapter speaking the fshape frame protocol")]
struct Args {
    /// Return the request image as the gradient payload.
    #[arg(long)]
    mirror: bool,
    /// Protocol version announced in the hello reply.
    #[arg(long, default_value_t = PROTOCOL_VERSION)]
    version: u32,
    /// Never answer the hello frame.
    #[arg(long)]
    hang_hello: bool,
    /// Handshake, then never answer a request.
    #[arg(long)]
    hang: bool,
    /// Reply with a gradient of the wrong shape.
    #[arg(long)]
    wrong_shape: bool,
    /// Put a NaN in the gradient.
    #[arg(long)]
    nan: bool,
    /// Exit without replying to the first request.
    #[arg(long)]
    die: bool,
    /// Reply to every request with this error message.
    #[arg(long)]
    error: Option<String>,
}

fn hang() -> ! {
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}

fn reply(args: &Args, header: &Value, payload: &[f32]) -> Result<Frame, String> {
    let dim = |k: &str| header.get(k).and_then(Value::as_u64).map(|v| v as usize).ok_or(format!("missing {k}"));
    let (h, w, ch) = (dim("h")?, dim("w")?, dim("ch")?);
    if payload.len() != h * w * ch {
        return Err(format!("payload has {} values, header says {h}x{w}x{ch}", payload.len()));
    }
    let n = payload.len().max(1);
    let loss = payload.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let scores = match header.get("mode").and_then(Value::as_str) {
        Some("detect") => {
            let boxes = header.get("boxes").and_then(Value::as_array).map_or(0, Vec::len);
            vec![loss; boxes]
        }
        Some("classify") => vec![loss],
        other => return Err(format!("unknown mode {other:?}")),
    };
    let mut grad: Vec<f32> = if args.mirror { payload.to_vec() } else { vec![(1.0 / n as f64) as f32; payload.len()] };
    let mut shape = [h, w, ch];
    if args.wrong_shape {
        shape = [w + 1, h, ch];
        grad.pop();
    }
    if args.nan {
        if let Some(g) = grad.first_mut() {
            *g = f32::NAN;
        }
    }
    Ok(Frame::new(json!({"loss": loss, "scores": scores, "grad_shape": shape}), grad))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    loop {
        let frame = match read_frame(&mut input) {
            Ok(Some(f)) => f,
            Ok(None) => return ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("fshape-echo-adapter: {e}");
                return ExitCode::FAILURE;
            }
        };
        let out = match frame.header.get("op").and_then(Value::as_str) {
            Some("hello") => {
                if args.hang_hello {
                    hang();
                }
                Frame::new(json!({"op": "hello", "version": args.version}), vec![])
            }
            Some("forward_backward") => {
                if args.hang {
                    hang();
                }
                if args.die {
                    return ExitCode::from(3);
                }
                match &args.error {
                    Some(msg) => Frame::new(json!({ "error": msg }), vec![]),
                    None => reply(&args, &frame.header, &frame.payload)
                        .unwrap_or_else(|msg| Frame::new(json!({ "error": msg }), vec![])),
                }
            }
            other => Frame::new(json!({ "error": format!("unknown op {other:?}") }), vec![]),
        };
        if let Err(e) = write_frame(&mut output, &out) {
            eprintln!("fshape-echo-adapter: {e}");
            return ExitCode::FAILURE;
        }
    }
}
