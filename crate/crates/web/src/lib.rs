//! Browser bindings: render a coefficient file, inspect its spectrum, and
//! step a shape-generation run frame by frame.

use fourier_shapes::contour::default_samples;
use fourier_shapes::export::{grid_bytes, svg_path};
use fourier_shapes::objective::toy::{self, SHAPES3_CLASSES, SHAPES3_SIZE};
use fourier_shapes::objective::{Model, RasterSettings};
use fourier_shapes::optimizer::{adam_step, init_coefficients, AdamState, Init, OptimizerConfig};
use fourier_shapes::raster::{polygonize, rasterize, CanvasSpec, RasterGrid};
use fourier_shapes::regularizer::fundamental_and_harmonic_sums;
use fourier_shapes::{reg_loss, FourierCoefficients, ObjectiveMode, ObjectiveSpec, Problem, RegularizerConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// Grayscale bytes with the top image row holding the largest `y`.
fn display_bytes(grid: &RasterGrid) -> Vec<u8> {
    let bytes = grid_bytes(grid);
    bytes.chunks_exact(grid.width()).rev().flatten().copied().collect()
}

fn outline(c: &FourierCoefficients) -> Res<String> {
    let poly = polygonize(c, 512).map_err(err)?;
    Ok(svg_path(&poly))
}

pub fn render_mask_impl(coeffs_json: &str, size: usize) -> Res<Vec<u8>> {
    let c = FourierCoefficients::from_json(coeffs_json).map_err(err)?;
    let canvas = CanvasSpec::square(size);
    canvas.validate().map_err(err)?;
    let (_, mask) = rasterize(&c, &canvas, default_samples(c.order())).map_err(err)?;
    Ok(display_bytes(&mask))
}

pub fn inspect_impl(coeffs_json: &str, lambda: f64, gamma: f64) -> Res<String> {
    let c = FourierCoefficients::from_json(coeffs_json).map_err(err)?;
    let cfg = RegularizerConfig { lambda, gamma, ..Default::default() };
    cfg.validate().map_err(err)?;
    let (s_fund, s_harm) = fundamental_and_harmonic_sums(&c);
    let (reg, _) = reg_loss(&c, &cfg);
    let amplitudes: Vec<_> = c.harmonics().map(|(k, a, b)| json!([k, a.hypot(b)])).collect();
    Ok(json!({
        "K": c.order(),
        "s_fund": s_fund,
        "s_harm": s_harm,
        "dominance_ok": lambda * s_harm <= s_fund,
        "reg": reg,
        "amplitudes": amplitudes,
        "path": outline(&c)?,
    })
    .to_string())
}

/// Rasterizes a coefficient file (`{"K": .., "coeffs": [[a, b], ...]}`) on a
/// `size × size` canvas; returns row-major grayscale bytes, top row first.
#[wasm_bindgen]
pub fn render_mask(coeffs_json: &str, size: usize) -> Result<Vec<u8>, JsError> {
    render_mask_impl(coeffs_json, size).map_err(|e| JsError::new(&e))
}

/// Spectrum, regularizer state and SVG outline of a coefficient file, as JSON.
#[wasm_bindgen]
pub fn inspect(coeffs_json: &str, lambda: f64, gamma: f64) -> Result<String, JsError> {
    inspect_impl(coeffs_json, lambda, gamma).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn class_names() -> String {
    json!(SHAPES3_CLASSES).to_string()
}

/// Coefficient file of one of the template silhouettes.
#[wasm_bindgen]
pub fn template(class: usize) -> Result<String, JsError> {
    toy::shapes3_templates()
        .get(class)
        .map(|c| c.to_json())
        .ok_or_else(|| JsError::new(&format!("no class {class}")))
}

/// Grows a shape toward one of the toy classifier's classes, a few Adam
/// steps per call.
#[wasm_bindgen]
pub struct GenerateSession {
    problem: Problem,
    opt: OptimizerConfig,
    c: FourierCoefficients,
    state: AdamState,
    step: usize,
    last: serde_json::Value,
}

impl GenerateSession {
    pub fn create(target: usize, order: usize, seed: u64, lambda_reg: f64) -> Res<Self> {
        if target >= SHAPES3_CLASSES.len() {
            return Err(format!("target must be below {}", SHAPES3_CLASSES.len()));
        }
        let mut spec = ObjectiveSpec::new(ObjectiveMode::Generate, target);
        spec.reg.lambda_reg = lambda_reg;
        let problem = Problem {
            order,
            raster: RasterSettings { canvas: CanvasSpec::square(SHAPES3_SIZE), samples: default_samples(order) },
            spec,
            model: Model::Mlp(toy::shapes3_mlp()),
            image: None,
        };
        problem.validate().map_err(err)?;
        let opt = OptimizerConfig { seed, init: Init::Random { scale: 0.05, min_radius: 0.5 }, ..Default::default() };
        let c = init_coefficients(&opt, order).map_err(err)?;
        let state = AdamState::new(c.params().len());
        Ok(Self { problem, opt, c, state, step: 0, last: json!(null) })
    }

    pub fn advance(&mut self, steps: usize) -> Res<String> {
        for _ in 0..steps.max(1) {
            let eval = self.problem.evaluate(&self.c).map_err(err)?;
            self.last = json!({
                "step": self.step,
                "total": eval.total,
                "data": eval.data,
                "reg": eval.reg,
                "area": eval.area,
                "probs": eval.scores,
                "success": eval.success,
            });
            adam_step(self.c.params_mut(), &eval.grad.grads, &mut self.state, &self.opt).map_err(err)?;
            self.step += 1;
        }
        Ok(self.last.to_string())
    }

    pub fn coefficients(&self) -> &FourierCoefficients {
        &self.c
    }
}

#[wasm_bindgen]
impl GenerateSession {
    #[wasm_bindgen(constructor)]
    pub fn new(target: usize, order: usize, seed: u64, lambda_reg: f64) -> Result<GenerateSession, JsError> {
        Self::create(target, order, seed, lambda_reg).map_err(|e| JsError::new(&e))
    }

    /// Runs `steps` updates; returns the last step's losses and class probabilities as JSON.
    pub fn step(&mut self, steps: usize) -> Result<String, JsError> {
        self.advance(steps).map_err(|e| JsError::new(&e))
    }

    /// The classifier's view: 32×32 grayscale bytes, top row first.
    pub fn mask(&self) -> Result<Vec<u8>, JsError> {
        let (_, mask) = rasterize(&self.c, &self.problem.raster.canvas, self.problem.raster.samples)
            .map_err(|e| JsError::new(&e.to_string()))?;
        Ok(display_bytes(&mask))
    }

    pub fn coeffs_json(&self) -> String {
        self.c.to_json()
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }
}
