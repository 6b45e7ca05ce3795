//! Adam over the flat coefficient vector, initialization, and the run loop.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contour::FourierCoefficients;
use crate::error::{Error, Result};
use crate::objective::{ObjectiveMode, Problem};

/// Minimum fundamental amplitude of a random start.
pub const MIN_RANDOM_FUNDAMENTAL: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Init {
    Circle { radius: f64 },
    File { path: PathBuf },
    Random {
        scale: f64,
        /// Floor on `|c_1|`.
        #[serde(default = "default_min_radius")]
        min_radius: f64,
    },
}

fn default_min_radius() -> f64 {
    MIN_RANDOM_FUNDAMENTAL
}

impl Init {
    pub fn random(scale: f64) -> Self {
        Init::Random { scale, min_radius: MIN_RANDOM_FUNDAMENTAL }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    pub init: Init,
    pub freeze_c0: bool,
    /// Trace lines and checkpoints are written every `log_every` steps.
    pub log_every: usize,
    /// Consecutive successful steps before stopping early; `None` never stops early.
    pub patience: Option<usize>,
    /// Record wall-clock time per step. Off by default so traces are reproducible.
    pub record_wall_time: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 1200,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
            init: Init::random(0.05),
            freeze_c0: false,
            log_every: 50,
            patience: Some(50),
            record_wall_time: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps_adam > 0.0) {
            return Err(Error::Config(format!("eps_adam must be positive, got {}", self.eps_adam)));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Starting coefficients for harmonic order `order`.
///
/// `random(s)` draws `c_0` and `c_{±1}` from `U(-s, s)` per real part and the
/// harmonics from `U(-s/k², s/k²)`, then lifts `|c_1|` to at least
/// `min_radius` (default [`MIN_RANDOM_FUNDAMENTAL`]) keeping its phase.
pub fn init_coefficients(cfg: &OptimizerConfig, order: usize) -> Result<FourierCoefficients> {
    match &cfg.init {
        Init::Circle { radius } => {
            if order == 0 {
                return Err(Error::Config("a circle start needs K >= 1".into()));
            }
            Ok(FourierCoefficients::circle(order, *radius))
        }
        Init::File { path } => {
            let c = FourierCoefficients::load(path)?;
            if c.order() != order {
                return Err(Error::Config(format!(
                    "{} holds K = {}, run expects K = {order}",
                    path.display(),
                    c.order()
                )));
            }
            Ok(c)
        }
        Init::Random { scale, min_radius } => {
            if order == 0 {
                return Err(Error::Config("a random start needs K >= 1".into()));
            }
            if !(*scale >= 0.0 && scale.is_finite()) {
                return Err(Error::Config(format!("random init scale must be >= 0, got {scale}")));
            }
            if !(*min_radius > 0.0 && min_radius.is_finite()) {
                return Err(Error::Config(format!("random init min_radius must be > 0, got {min_radius}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut c = FourierCoefficients::zeros(order);
            for k in -(order as i64)..=order as i64 {
                let s = scale / (k.unsigned_abs().max(1) as f64).powi(2);
                let (a, b) = if s > 0.0 { (rng.gen_range(-s..s), rng.gen_range(-s..s)) } else { (0.0, 0.0) };
                c.set(k, a, b);
            }
            let (a, b) = c.get(1);
            let r = a.hypot(b);
            if r < *min_radius {
                if r > 0.0 {
                    c.set(1, a / r * min_radius, b / r * min_radius);
                } else {
                    c.set(1, *min_radius, 0.0);
                }
            }
            Ok(c)
        }
    }
}

/// First/second moment estimates and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &OptimizerConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::InvalidInput(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("gradient entry {i} is {}", grads[i])));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub total: f64,
    pub data: f64,
    pub reg: f64,
    pub area: f64,
    pub success: bool,
    /// Lowest total loss seen up to and including this step.
    pub best_total: f64,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    StepBudget,
    Success { step: usize },
    Aborted { error: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
    pub final_coefficients: FourierCoefficients,
    pub termination: Termination,
}

impl OptimizationTrace {
    /// First step at which the success predicate held, if any.
    pub fn first_success(&self) -> Option<usize> {
        self.records.iter().find(|r| r.success).map(|r| r.step)
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn summary(&self) -> TraceSummary {
        let last = self.records.last();
        TraceSummary {
            steps: self.records.len(),
            termination: self.termination.clone(),
            first_success: self.first_success(),
            final_total: last.map(|r| r.total),
            final_data: last.map(|r| r.data),
            final_area: last.map(|r| r.area),
            final_success: last.map(|r| r.success),
            final_scores: last.map(|r| r.scores.clone()).unwrap_or_default(),
            order: self.final_coefficients.order(),
            coeffs: crate::contour::CoefficientFile::from(&self.final_coefficients).coeffs,
        }
    }
}

/// Final line of a JSON-lines trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub termination: Termination,
    pub first_success: Option<usize>,
    pub final_total: Option<f64>,
    pub final_data: Option<f64>,
    pub final_area: Option<f64>,
    pub final_success: Option<bool>,
    pub final_scores: Vec<f64>,
    #[serde(rename = "K")]
    pub order: usize,
    pub coeffs: Vec<[f64; 2]>,
}

/// Where trace lines and checkpoints go.
pub struct TraceSink {
    out: Box<dyn Write>,
    checkpoint_dir: Option<PathBuf>,
}

impl TraceSink {
    pub fn new(out: Box<dyn Write>, checkpoint_dir: Option<PathBuf>) -> Self {
        Self { out, checkpoint_dir }
    }

    pub fn to_file(path: &Path, checkpoint_dir: Option<PathBuf>) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        if let Some(dir) = &checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Self::new(Box::new(std::io::BufWriter::new(file)), checkpoint_dir))
    }

    fn record(&mut self, rec: &TraceRecord, c: &FourierCoefficients) -> Result<()> {
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(self.out, "{line}").map_err(|e| Error::io(Path::new("<trace>"), e))?;
        if let Some(dir) = &self.checkpoint_dir {
            c.save(&checkpoint_path(dir, rec.step))?;
        }
        Ok(())
    }

    fn finish(&mut self, trace: &OptimizationTrace) -> Result<()> {
        let line = serde_json::to_string(&serde_json::json!({ "summary": trace.summary() })).unwrap();
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(Path::new("<trace>"), e))
    }
}

pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("ckpt_{step:06}.json"))
}

/// A run that stopped on an error, with everything recorded before it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub trace: OptimizationTrace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "optimization aborted after {} steps: {}", self.trace.records.len(), self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Gradient descent on the problem's loss.
///
/// Each step evaluates loss and gradient at the current coefficients, records
/// them, then applies one Adam update. The run ends at the step budget, or
/// once the success predicate has held for `patience` consecutive steps.
/// Early stopping is not applied to `saliency-keep`, whose predicate
/// (true class retained) usually holds from the first step.
pub fn run_optimization(
    problem: &mut Problem,
    opt: &OptimizerConfig,
    mut sink: Option<&mut TraceSink>,
) -> std::result::Result<OptimizationTrace, RunFailure> {
    let start = Instant::now();
    let fail = |error: Error, records: Vec<TraceRecord>, c: FourierCoefficients| RunFailure {
        trace: OptimizationTrace {
            records,
            final_coefficients: c.clone(),
            termination: Termination::Aborted { error: error.to_string() },
        },
        error,
    };
    let setup = opt.validate().and_then(|_| problem.validate()).and_then(|_| init_coefficients(opt, problem.order));
    let mut c = match setup {
        Ok(c) => c,
        Err(e) => return Err(fail(e, vec![], FourierCoefficients::zeros(problem.order))),
    };
    let early_stop = match problem.spec.mode {
        ObjectiveMode::SaliencyKeep => None,
        _ => opt.patience,
    };
    let mut state = AdamState::new(c.params().len());
    let mut records = Vec::with_capacity(opt.steps);
    let mut best = f64::INFINITY;
    let mut streak = 0usize;
    let mut termination = Termination::StepBudget;
    let c0 = c.index_of(0);

    for step in 0..opt.steps {
        let eval = match problem.evaluate(&c) {
            Ok(e) => e,
            Err(e) => return Err(abort(e, records, c, sink)),
        };
        best = best.min(eval.total);
        let rec = TraceRecord {
            step,
            total: eval.total,
            data: eval.data,
            reg: eval.reg,
            area: eval.area,
            success: eval.success,
            best_total: best,
            scores: eval.scores.clone(),
            clamped: eval.clamped,
            wall_ms: opt.record_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3),
        };
        let last_step = step + 1 == opt.steps;
        streak = if eval.success { streak + 1 } else { 0 };
        let stop = early_stop.is_some_and(|p| streak >= p.max(1));
        if let Some(s) = sink.as_deref_mut() {
            if step % opt.log_every == 0 || last_step || stop {
                if let Err(e) = s.record(&rec, &c) {
                    records.push(rec);
                    return Err(abort(e, records, c, sink));
                }
            }
        }
        records.push(rec);
        if stop {
            termination = Termination::Success { step };
            break;
        }
        if last_step {
            break;
        }
        let mut grads = eval.grad.grads;
        if opt.freeze_c0 {
            grads[c0] = 0.0;
            grads[c0 + 1] = 0.0;
        }
        if let Err(e) = adam_step(c.params_mut(), &grads, &mut state, opt) {
            return Err(abort(e, records, c, sink));
        }
    }

    let trace = OptimizationTrace { records, final_coefficients: c, termination };
    if let Some(s) = sink {
        if let Err(e) = s.finish(&trace) {
            let OptimizationTrace { records, final_coefficients, .. } = trace;
            return Err(fail(e, records, final_coefficients));
        }
    }
    Ok(trace)
}

fn abort(error: Error, records: Vec<TraceRecord>, c: FourierCoefficients, sink: Option<&mut TraceSink>) -> RunFailure {
    let trace = OptimizationTrace {
        records,
        final_coefficients: c,
        termination: Termination::Aborted { error: error.to_string() },
    };
    if let Some(s) = sink {
        let _ = s.finish(&trace);
    }
    RunFailure { error, trace }
}
