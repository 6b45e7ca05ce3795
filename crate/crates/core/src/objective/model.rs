//! Fixed-weight stand-ins for a classifier and a detector, and the binding
//! that selects between them and an external adapter process.
//!
//! Builtin weights persist as a `WNDR` raw float blob (one row holding every
//! tensor back to back) with a JSON sidecar at `<weights>.json` naming the
//! tensors and their shapes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterClient, AdapterCommand, RequestKind};
use crate::error::{Error, Result};
use crate::export::{read_raw_f32, write_raw_f32};
use crate::objective::image::{BoundingBox, NaturalImage};
use crate::objective::toy;

/// Objectness scores are clamped to at most this value before `-log(1 - o)`.
pub const MAX_OBJECTNESS: f64 = 1.0 - 1e-7;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax_at(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits[class] - lse
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Classifier output for one image and one class of interest.
#[derive(Clone, Debug)]
pub struct ClassOutput {
    pub probs: Vec<f64>,
    pub log_prob: f64,
    /// `∂ log p_class / ∂ pixels`.
    pub grad: Vec<f64>,
}

/// Detector output for a set of boxes.
#[derive(Clone, Debug)]
pub struct DetectOutput {
    pub scores: Vec<f64>,
    /// `Σ_j -log(1 - o_j)`.
    pub loss: f64,
    /// `∂ loss / ∂ pixels`.
    pub grad: Vec<f64>,
    /// Some score reached 1 and was clamped.
    pub clamped: bool,
}

/// `softmax(W·x + b)` over the flattened image.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub input: [usize; 3],
    pub classes: usize,
    /// `classes × inputs`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn new(input: [usize; 3], classes: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let p = input.iter().product::<usize>();
        if weight.len() != classes * p || bias.len() != classes {
            return Err(Error::InvalidInput(format!(
                "linear model {input:?} -> {classes}: weight {} (want {}), bias {} (want {classes})",
                weight.len(),
                classes * p,
                bias.len()
            )));
        }
        check_finite("linear weights", weight.iter().chain(&bias))?;
        Ok(Self { input, classes, weight, bias })
    }

    fn inputs(&self) -> usize {
        self.input.iter().product()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let p = self.inputs();
        (0..self.classes)
            .map(|c| self.bias[c] + dot(&self.weight[c * p..(c + 1) * p], x))
            .collect()
    }

    pub fn forward(&self, image: &NaturalImage) -> Result<Vec<f64>> {
        check_input(self.input, image)?;
        Ok(softmax(&self.logits(&image.values)))
    }

    pub fn class_output(&self, image: &NaturalImage, class: usize) -> Result<ClassOutput> {
        check_input(self.input, image)?;
        check_class(class, self.classes)?;
        let logits = self.logits(&image.values);
        let probs = softmax(&logits);
        let p = self.inputs();
        let mut grad = vec![0.0; p];
        for c in 0..self.classes {
            let coef = if c == class { 1.0 } else { 0.0 } - probs[c];
            axpy(coef, &self.weight[c * p..(c + 1) * p], &mut grad);
        }
        Ok(ClassOutput { log_prob: log_softmax_at(&logits, class), probs, grad })
    }
}

/// One hidden `tanh` layer followed by a softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub input: [usize; 3],
    pub hidden: usize,
    pub classes: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpModel {
    pub fn new(
        input: [usize; 3],
        hidden: usize,
        classes: usize,
        [w1, b1, w2, b2]: [Vec<f64>; 4],
    ) -> Result<Self> {
        let p = input.iter().product::<usize>();
        if w1.len() != hidden * p || b1.len() != hidden || w2.len() != classes * hidden || b2.len() != classes {
            return Err(Error::InvalidInput(format!(
                "mlp {input:?} -> {hidden} -> {classes}: tensor sizes {} {} {} {} do not fit",
                w1.len(),
                b1.len(),
                w2.len(),
                b2.len()
            )));
        }
        check_finite("mlp weights", w1.iter().chain(&b1).chain(&w2).chain(&b2))?;
        Ok(Self { input, hidden, classes, w1, b1, w2, b2 })
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let p = x.len();
        (0..self.hidden)
            .map(|h| (self.b1[h] + dot(&self.w1[h * p..(h + 1) * p], x)).tanh())
            .collect()
    }

    fn head(&self, hidden: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| self.b2[c] + dot(&self.w2[c * self.hidden..(c + 1) * self.hidden], hidden))
            .collect()
    }

    pub fn forward(&self, image: &NaturalImage) -> Result<Vec<f64>> {
        check_input(self.input, image)?;
        Ok(softmax(&self.head(&self.hidden_activations(&image.values))))
    }

    pub fn class_output(&self, image: &NaturalImage, class: usize) -> Result<ClassOutput> {
        check_input(self.input, image)?;
        check_class(class, self.classes)?;
        let x = &image.values;
        let act = self.hidden_activations(x);
        let logits = self.head(&act);
        let probs = softmax(&logits);
        let mut d_act = vec![0.0; self.hidden];
        for c in 0..self.classes {
            let coef = if c == class { 1.0 } else { 0.0 } - probs[c];
            axpy(coef, &self.w2[c * self.hidden..(c + 1) * self.hidden], &mut d_act);
        }
        let p = x.len();
        let mut grad = vec![0.0; p];
        for h in 0..self.hidden {
            let dz = d_act[h] * (1.0 - act[h] * act[h]);
            axpy(dz, &self.w1[h * p..(h + 1) * p], &mut grad);
        }
        Ok(ClassOutput { log_prob: log_softmax_at(&logits, class), probs, grad })
    }
}

/// Scores each box as `sigmoid(gain · mean intensity inside the box + offset)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDetector {
    pub gain: f64,
    pub offset: f64,
}

impl SurrogateDetector {
    fn box_pixels(image: &NaturalImage, b: &BoundingBox) -> Result<Vec<usize>> {
        let (cols, rows) = b.clamped(image.width, image.height)?.pixel_span();
        Ok(rows
            .flat_map(|r| cols.clone().map(move |c| r * image.width + c))
            .collect())
    }

    fn box_mean(image: &NaturalImage, pixels: &[usize]) -> f64 {
        let ch = image.channels;
        let sum: f64 = pixels
            .iter()
            .map(|&p| image.values[p * ch..(p + 1) * ch].iter().sum::<f64>())
            .sum();
        sum / (pixels.len() * ch).max(1) as f64
    }

    pub fn scores(&self, image: &NaturalImage, boxes: &[BoundingBox]) -> Result<Vec<f64>> {
        boxes
            .iter()
            .map(|b| {
                let px = Self::box_pixels(image, b)?;
                Ok(sigmoid(self.gain * Self::box_mean(image, &px) + self.offset))
            })
            .collect()
    }

    pub fn detect(&self, image: &NaturalImage, boxes: &[BoundingBox]) -> Result<DetectOutput> {
        let ch = image.channels;
        let mut grad = vec![0.0; image.values.len()];
        let mut scores = Vec::with_capacity(boxes.len());
        let mut loss = 0.0;
        let mut clamped = false;
        for b in boxes {
            let px = Self::box_pixels(image, b)?;
            if px.is_empty() {
                return Err(Error::InvalidInput(format!("box {b:?} covers no pixel centre")));
            }
            let o = sigmoid(self.gain * Self::box_mean(image, &px) + self.offset);
            let oc = if o > MAX_OBJECTNESS {
                clamped = true;
                MAX_OBJECTNESS
            } else {
                o
            };
            loss -= (1.0 - oc).ln();
            // d(-log(1 - o))/dz = o for o = sigmoid(z).
            let dpix = o * self.gain / (px.len() * ch) as f64;
            for &p in &px {
                for g in &mut grad[p * ch..(p + 1) * ch] {
                    *g += dpix;
                }
            }
            scores.push(o);
        }
        Ok(DetectOutput { scores, loss, grad, clamped })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_input(shape: [usize; 3], image: &NaturalImage) -> Result<()> {
    if image.shape() != shape {
        return Err(Error::InvalidInput(format!(
            "model expects input {shape:?}, got {:?}",
            image.shape()
        )));
    }
    Ok(())
}

fn check_class(class: usize, classes: usize) -> Result<()> {
    if class >= classes {
        return Err(Error::InvalidInput(format!("class {class} out of range for {classes} classes")));
    }
    Ok(())
}

fn check_finite<'a>(what: &str, mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} contain non-finite values")));
    }
    Ok(())
}

/// JSON sidecar describing a builtin weight blob.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightSidecar {
    pub kind: String,
    pub input: [usize; 3],
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

pub fn sidecar_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn save_tensors(path: &Path, kind: &str, input: [usize; 3], tensors: &[(&str, Vec<usize>, &[f64])]) -> Result<()> {
    let flat: Vec<f64> = tensors.iter().flat_map(|(_, _, v)| v.iter().copied()).collect();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_raw_f32(std::io::BufWriter::new(file), 1, flat.len(), &flat).map_err(|e| Error::io(path, e))?;
    let sidecar = WeightSidecar {
        kind: kind.into(),
        input,
        tensors: tensors
            .iter()
            .map(|(n, s, _)| TensorEntry { name: (*n).into(), shape: s.clone() })
            .collect(),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar).unwrap()).map_err(|e| Error::io(&side, e))
}

fn load_tensors(path: &Path) -> Result<(WeightSidecar, Vec<Vec<f64>>)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: WeightSidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: side.display().to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (_, _, flat) = read_raw_f32(std::io::BufReader::new(file))?;
    let want: usize = sidecar.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if want != flat.len() {
        return Err(Error::InvalidInput(format!(
            "{}: sidecar describes {want} values, blob holds {}",
            path.display(),
            flat.len()
        )));
    }
    let mut out = Vec::with_capacity(sidecar.tensors.len());
    let mut at = 0;
    for t in &sidecar.tensors {
        let n: usize = t.shape.iter().product();
        out.push(flat[at..at + n].iter().map(|&v| v as f64).collect());
        at += n;
    }
    Ok((sidecar, out))
}

impl LinearModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let p = self.inputs();
        save_tensors(
            path,
            "builtin-linear",
            self.input,
            &[("weight", vec![self.classes, p], &self.weight), ("bias", vec![self.classes], &self.bias)],
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (side, mut t) = load_tensors(path)?;
        if side.kind != "builtin-linear" || t.len() != 2 {
            return Err(Error::InvalidInput(format!("{} is not a builtin-linear weight file", path.display())));
        }
        let classes = side.tensors[1].shape.iter().product();
        let bias = t.pop().unwrap();
        let weight = t.pop().unwrap();
        Self::new(side.input, classes, weight, bias)
    }
}

impl MlpModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let p = self.input.iter().product();
        save_tensors(
            path,
            "builtin-mlp",
            self.input,
            &[
                ("w1", vec![self.hidden, p], &self.w1),
                ("b1", vec![self.hidden], &self.b1),
                ("w2", vec![self.classes, self.hidden], &self.w2),
                ("b2", vec![self.classes], &self.b2),
            ],
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (side, t) = load_tensors(path)?;
        if side.kind != "builtin-mlp" || t.len() != 4 {
            return Err(Error::InvalidInput(format!("{} is not a builtin-mlp weight file", path.display())));
        }
        let hidden = side.tensors[1].shape.iter().product();
        let classes = side.tensors[3].shape.iter().product();
        let [w1, b1, w2, b2]: [Vec<f64>; 4] = t.try_into().unwrap();
        Self::new(side.input, hidden, classes, [w1, b1, w2, b2])
    }
}

/// Where a model comes from, as written in a run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelBinding {
    BuiltinLinear {
        #[serde(default)]
        weights: Option<PathBuf>,
        #[serde(default)]
        preset: Option<String>,
    },
    BuiltinMlp {
        #[serde(default)]
        weights: Option<PathBuf>,
        #[serde(default)]
        preset: Option<String>,
    },
    BuiltinDetector {
        gain: f64,
        offset: f64,
    },
    ExternalAdapter(AdapterCommand),
}

impl ModelBinding {
    /// Loads weights or starts the adapter process.
    pub fn instantiate(&self) -> Result<Model> {
        let need_one = |weights: &Option<PathBuf>, preset: &Option<String>| match (weights, preset) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(Error::Config("builtin models need exactly one of `weights` or `preset`".into())),
        };
        match self {
            ModelBinding::BuiltinLinear { weights, preset } => {
                need_one(weights, preset)?;
                match (weights, preset) {
                    (Some(w), _) => Ok(Model::Linear(LinearModel::load(w)?)),
                    (_, Some(p)) => toy::linear_preset(p).map(Model::Linear),
                    _ => unreachable!(),
                }
            }
            ModelBinding::BuiltinMlp { weights, preset } => {
                need_one(weights, preset)?;
                match (weights, preset) {
                    (Some(w), _) => Ok(Model::Mlp(MlpModel::load(w)?)),
                    (_, Some(p)) => toy::mlp_preset(p).map(Model::Mlp),
                    _ => unreachable!(),
                }
            }
            ModelBinding::BuiltinDetector { gain, offset } => {
                if !(gain.is_finite() && offset.is_finite()) {
                    return Err(Error::Config("detector gain/offset must be finite".into()));
                }
                Ok(Model::Detector(SurrogateDetector { gain: *gain, offset: *offset }))
            }
            ModelBinding::ExternalAdapter(cmd) => Ok(Model::External(AdapterClient::spawn(cmd)?)),
        }
    }
}

/// A ready-to-query classifier or detector.
#[derive(Debug)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
    Detector(SurrogateDetector),
    External(AdapterClient),
}

impl Model {
    /// Fixed input shape of builtin classifiers.
    pub fn input_shape(&self) -> Option<[usize; 3]> {
        match self {
            Model::Linear(m) => Some(m.input),
            Model::Mlp(m) => Some(m.input),
            Model::Detector(_) | Model::External(_) => None,
        }
    }

    /// `log p_class` and its pixel gradient.
    pub fn classify(&mut self, image: &NaturalImage, class: usize) -> Result<ClassOutput> {
        match self {
            Model::Linear(m) => m.class_output(image, class),
            Model::Mlp(m) => m.class_output(image, class),
            Model::Detector(_) => Err(Error::Config("the surrogate detector cannot classify".into())),
            Model::External(client) => {
                let r = client.forward_backward(image, &RequestKind::Classify { target: class })?;
                Ok(ClassOutput {
                    probs: r.scores,
                    log_prob: -r.loss,
                    grad: r.grad.iter().map(|g| -g).collect(),
                })
            }
        }
    }

    /// Objectness for each box, `Σ -log(1 - o_j)` and its pixel gradient.
    pub fn detect(&mut self, image: &NaturalImage, boxes: &[BoundingBox]) -> Result<DetectOutput> {
        match self {
            Model::Detector(d) => d.detect(image, boxes),
            Model::Linear(_) | Model::Mlp(_) => Err(Error::Config("classifiers cannot score boxes".into())),
            Model::External(client) => {
                let r = client.forward_backward(image, &RequestKind::Detect { boxes: boxes.to_vec() })?;
                let clamped = r.scores.iter().any(|&o| o >= 1.0);
                Ok(DetectOutput { scores: r.scores, loss: r.loss, grad: r.grad, clamped })
            }
        }
    }
}
