//! The four shape objectives and their gradients with respect to the
//! coefficients.
//!
//! Each loss rasterizes the contour, pushes the mask through the image path
//! of its mode into the model, and pulls the model's pixel gradient back to a
//! mask-space upstream field that [`rasterize_backward`] maps onto `(a_k, b_k)`.

use serde::{Deserialize, Serialize};

use crate::contour::FourierCoefficients;
use crate::error::{Error, Result};
use crate::objective::image::{composite_mask, composite_mask_adjoint, render_patch, BoundingBox, NaturalImage};
use crate::objective::model::{argmax, Model};
use crate::raster::{rasterize, rasterize_backward, CanvasSpec, CoefficientGradient, RasterGrid};
use crate::regularizer::{area_term, reg_loss, RegularizerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// `-log C(I)_target + λ_reg·L_reg`
    Generate,
    /// `-log C(x ⊙ I)_true + λ_area·mean(I) + λ_reg·L_reg`
    SaliencyKeep,
    /// `log C(x ⊙ I)_true - λ_area·mean(I) + λ_reg·L_reg`
    SaliencyOcclude,
    /// `Σ_j -log(1 - o_j) + λ_reg·L_reg`, `o_j` from the detector on the patched image
    PatchAttack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub mode: ObjectiveMode,
    /// Target class for `generate`, true class for the saliency modes.
    #[serde(default)]
    pub label: usize,
    #[serde(default)]
    pub boxes: Vec<BoundingBox>,
    #[serde(default = "default_patch_scale")]
    pub patch_scale: f64,
    #[serde(default = "default_patch_color")]
    pub patch_color: Vec<f64>,
    /// Objectness below which a target counts as suppressed.
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    #[serde(default)]
    pub reg: RegularizerConfig,
}

fn default_patch_scale() -> f64 {
    0.6
}

fn default_patch_color() -> Vec<f64> {
    vec![1.0]
}

fn default_threshold() -> f64 {
    0.5
}

impl ObjectiveSpec {
    pub fn new(mode: ObjectiveMode, label: usize) -> Self {
        Self {
            mode,
            label,
            boxes: vec![],
            patch_scale: default_patch_scale(),
            patch_color: default_patch_color(),
            success_threshold: default_threshold(),
            reg: RegularizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reg.validate()?;
        if self.mode == ObjectiveMode::PatchAttack {
            if self.boxes.is_empty() {
                return Err(Error::Config("patch-attack needs at least one box".into()));
            }
            if !(self.patch_scale > 0.0 && self.patch_scale <= 1.0) {
                return Err(Error::Config(format!("patch_scale must lie in (0, 1], got {}", self.patch_scale)));
            }
            if self.patch_color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Config(format!("patch_color {:?} outside [0, 1]", self.patch_color)));
            }
        }
        Ok(())
    }

    /// Patch colour broadcast to `channels`.
    fn color_for(&self, channels: usize) -> Result<Vec<f64>> {
        match self.patch_color.len() {
            1 => Ok(vec![self.patch_color[0]; channels]),
            n if n == channels => Ok(self.patch_color.clone()),
            n => Err(Error::Config(format!("patch_color has {n} channels, image has {channels}"))),
        }
    }
}

/// Canvas and quadrature resolution for rendering the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterSettings {
    pub canvas: CanvasSpec,
    pub samples: usize,
}

/// One evaluation of an objective.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub total: f64,
    pub data: f64,
    /// Unweighted `L_reg`.
    pub reg: f64,
    /// `mean(I)`.
    pub area: f64,
    pub grad: CoefficientGradient,
    pub success: bool,
    /// Class probabilities or objectness scores.
    pub scores: Vec<f64>,
    /// An objectness score of 1 was clamped.
    pub clamped: bool,
}

/// Data term, its mask-space upstream, scores and success flag.
struct DataTerm {
    value: f64,
    upstream: Vec<f64>,
    scores: Vec<f64>,
    success: bool,
    clamped: bool,
}

fn finish(
    c: &FourierCoefficients,
    spec: &ObjectiveSpec,
    raster: &RasterSettings,
    mask: &RasterGrid,
    mut data: DataTerm,
) -> Result<LossEval> {
    if !data.value.is_finite() {
        return Err(Error::Numeric(format!("model loss is not finite ({})", data.value)));
    }
    let (area, area_up) = area_term(mask);
    let area_sign = match spec.mode {
        ObjectiveMode::SaliencyKeep => 1.0,
        ObjectiveMode::SaliencyOcclude => -1.0,
        _ => 0.0,
    };
    let area_weight = area_sign * spec.reg.lambda_area;
    if area_weight != 0.0 {
        for (u, a) in data.upstream.iter_mut().zip(&area_up) {
            *u += area_weight * a;
        }
    }
    let (reg, reg_grad) = reg_loss(c, &spec.reg);
    let mut grad = rasterize_backward(c, &raster.canvas, raster.samples, &data.upstream)?;
    grad.add_scaled(&reg_grad, spec.reg.lambda_reg);
    let total = data.value + area_weight * area + spec.reg.lambda_reg * reg;
    Ok(LossEval {
        total,
        data: data.value,
        reg,
        area,
        grad,
        success: data.success,
        scores: data.scores,
        clamped: data.clamped,
    })
}

fn check_mode(spec: &ObjectiveSpec, mode: ObjectiveMode) -> Result<()> {
    if spec.mode != mode {
        return Err(Error::Config(format!("objective is {:?}, not {mode:?}", spec.mode)));
    }
    Ok(())
}

/// Class-specific generation: the mask itself is the classifier input.
pub fn loss_generate(
    c: &FourierCoefficients,
    spec: &ObjectiveSpec,
    model: &mut Model,
    raster: &RasterSettings,
) -> Result<LossEval> {
    check_mode(spec, ObjectiveMode::Generate)?;
    let (_, mask) = rasterize(c, &raster.canvas, raster.samples)?;
    let out = model.classify(&NaturalImage::from_mask(&mask), spec.label)?;
    let data = DataTerm {
        value: -out.log_prob,
        upstream: out.grad.iter().map(|g| -g).collect(),
        success: argmax(&out.probs) == spec.label,
        scores: out.probs,
        clamped: false,
    };
    finish(c, spec, raster, &mask, data)
}

fn saliency(
    c: &FourierCoefficients,
    x: &NaturalImage,
    spec: &ObjectiveSpec,
    model: &mut Model,
    raster: &RasterSettings,
    keep: bool,
) -> Result<LossEval> {
    let (_, mask) = rasterize(c, &raster.canvas, raster.samples)?;
    let masked = composite_mask(x, &mask)?;
    let out = model.classify(&masked, spec.label)?;
    let sign = if keep { -1.0 } else { 1.0 };
    let scaled: Vec<f64> = out.grad.iter().map(|g| sign * g).collect();
    let top1 = argmax(&out.probs);
    let data = DataTerm {
        value: sign * out.log_prob,
        upstream: composite_mask_adjoint(x, &scaled)?,
        success: if keep { top1 == spec.label } else { top1 != spec.label },
        scores: out.probs,
        clamped: false,
    };
    finish(c, spec, raster, &mask, data)
}

/// Minimal salient region: keep the true class with as little mask as possible.
pub fn loss_saliency_keep(
    c: &FourierCoefficients,
    x: &NaturalImage,
    spec: &ObjectiveSpec,
    model: &mut Model,
    raster: &RasterSettings,
) -> Result<LossEval> {
    check_mode(spec, ObjectiveMode::SaliencyKeep)?;
    saliency(c, x, spec, model, raster, true)
}

/// Minimal occlusion: lose the true class while keeping as much mask as possible.
pub fn loss_saliency_occlude(
    c: &FourierCoefficients,
    x: &NaturalImage,
    spec: &ObjectiveSpec,
    model: &mut Model,
    raster: &RasterSettings,
) -> Result<LossEval> {
    check_mode(spec, ObjectiveMode::SaliencyOcclude)?;
    saliency(c, x, spec, model, raster, false)
}

/// Shape-as-patch attack on a detector.
pub fn loss_patch_attack(
    c: &FourierCoefficients,
    x: &NaturalImage,
    spec: &ObjectiveSpec,
    model: &mut Model,
    raster: &RasterSettings,
) -> Result<LossEval> {
    check_mode(spec, ObjectiveMode::PatchAttack)?;
    let (_, mask) = rasterize(c, &raster.canvas, raster.samples)?;
    let color = spec.color_for(x.channels)?;
    let rendered = render_patch(x, &mask, &spec.boxes, spec.patch_scale, &color)?;
    let out = model.detect(&rendered.image, &spec.boxes)?;
    let data = DataTerm {
        value: out.loss,
        upstream: rendered.backward(&out.grad)?,
        success: out.scores.iter().all(|&o| o < spec.success_threshold),
        scores: out.scores,
        clamped: out.clamped,
    };
    finish(c, spec, raster, &mask, data)
}

/// A fully bound optimization problem: objective, model, scene and raster settings.
#[derive(Debug)]
pub struct Problem {
    pub order: usize,
    pub raster: RasterSettings,
    pub spec: ObjectiveSpec,
    pub model: Model,
    pub image: Option<NaturalImage>,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.raster.canvas.validate()?;
        let floor = crate::contour::sampling_floor(self.order);
        if self.raster.samples < floor {
            return Err(Error::Config(format!(
                "N = {} is below the sampling floor 4K = {floor}",
                self.raster.samples
            )));
        }
        if self.spec.mode != ObjectiveMode::Generate && self.image.is_none() {
            return Err(Error::Config(format!("{:?} needs an input image", self.spec.mode)));
        }
        let canvas = &self.raster.canvas;
        let fed = match (self.spec.mode, &self.image) {
            (ObjectiveMode::Generate, _) => Some([canvas.height, canvas.width, 1]),
            (ObjectiveMode::PatchAttack, _) => None,
            (_, Some(img)) => {
                if img.height != canvas.height || img.width != canvas.width {
                    return Err(Error::Config(format!(
                        "image is {}x{}, canvas is {}x{}",
                        img.height, img.width, canvas.height, canvas.width
                    )));
                }
                Some(img.shape())
            }
            (_, None) => None,
        };
        if let (Some(fed), Some(want)) = (fed, self.model.input_shape()) {
            if fed != want {
                return Err(Error::Config(format!("model expects input {want:?}, the problem feeds {fed:?}")));
            }
        }
        Ok(())
    }

    fn image(&self) -> Result<&NaturalImage> {
        self.image
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{:?} needs an input image", self.spec.mode)))
    }

    pub fn evaluate(&mut self, c: &FourierCoefficients) -> Result<LossEval> {
        if c.order() != self.order {
            return Err(Error::InvalidInput(format!(
                "coefficients have K = {}, problem expects {}",
                c.order(),
                self.order
            )));
        }
        match self.spec.mode {
            ObjectiveMode::Generate => loss_generate(c, &self.spec, &mut self.model, &self.raster),
            mode => {
                let x = self.image()?.clone();
                match mode {
                    ObjectiveMode::SaliencyKeep => loss_saliency_keep(c, &x, &self.spec, &mut self.model, &self.raster),
                    ObjectiveMode::SaliencyOcclude => {
                        loss_saliency_occlude(c, &x, &self.spec, &mut self.model, &self.raster)
                    }
                    _ => loss_patch_attack(c, &x, &self.spec, &mut self.model, &self.raster),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::model::{LinearModel, SurrogateDetector};
    use crate::objective::toy;
    use crate::raster::CanvasSpec;

    fn settings(size: usize) -> RasterSettings {
        RasterSettings { canvas: CanvasSpec::square(size), samples: 256 }
    }

    fn fd(problem: &mut Problem, c: &FourierCoefficients, i: usize, h: f64) -> f64 {
        let mut p = c.clone();
        p.params_mut()[i] += h;
        let lp = problem.evaluate(&p).unwrap().total;
        p.params_mut()[i] -= 2.0 * h;
        let lm = problem.evaluate(&p).unwrap().total;
        (lp - lm) / (2.0 * h)
    }

    #[test]
    fn pro_area_gradient_grows_shape() {
        let mut problem = Problem {
            order: 2,
            raster: settings(toy::PRO_AREA_SIZE),
            spec: ObjectiveSpec::new(ObjectiveMode::Generate, 0),
            model: Model::Linear(toy::pro_area_linear()),
            image: None,
        };
        let c = FourierCoefficients::circle(2, 0.4);
        let eval = problem.evaluate(&c).unwrap();
        let i = c.index_of(1);
        // Descending the loss must increase a_1, i.e. the gradient is negative.
        assert!(eval.grad.grads[i] < 0.0);
        assert!(fd(&mut problem, &c, i, 1e-5) < 0.0);
    }

    #[test]
    fn certain_target_has_zero_data_term() {
        let p = 16 * 16;
        let mut w = vec![0.0; 2 * p];
        w[..p].fill(0.0);
        let model = LinearModel::new([16, 16, 1], 2, w, vec![1000.0, 0.0]).unwrap();
        let mut spec = ObjectiveSpec::new(ObjectiveMode::Generate, 0);
        spec.reg.lambda_reg = 0.0;
        let mut problem = Problem { order: 1, raster: settings(16), spec, model: Model::Linear(model), image: None };
        let eval = problem.evaluate(&FourierCoefficients::circle(1, 0.5)).unwrap();
        assert_eq!(eval.data, 0.0);
    }

    #[test]
    fn keep_with_confident_model_is_regularizer_only() {
        let p = 16 * 16;
        let model = LinearModel::new([16, 16, 1], 2, vec![0.0; 2 * p], vec![1000.0, 0.0]).unwrap();
        let mut spec = ObjectiveSpec::new(ObjectiveMode::SaliencyKeep, 0);
        spec.reg.lambda_area = 0.0;
        let mut c = FourierCoefficients::circle(2, 2.0);
        c.set(2, 0.9, 0.0);
        let mut problem = Problem {
            order: 2,
            raster: settings(16),
            spec: spec.clone(),
            model: Model::Linear(model),
            image: Some(NaturalImage::filled(16, 16, 1, 0.5)),
        };
        let eval = problem.evaluate(&c).unwrap();
        let (reg, _) = reg_loss(&c, &spec.reg);
        assert!(reg > 0.0);
        assert!((eval.total - spec.reg.lambda_reg * reg).abs() < 1e-12);
    }

    #[test]
    fn occlude_with_full_mask() {
        let p = 8 * 8;
        let model = LinearModel::new([8, 8, 1], 2, vec![0.0; 2 * p], vec![0.0, 0.0]).unwrap();
        let mut spec = ObjectiveSpec::new(ObjectiveMode::SaliencyOcclude, 0);
        spec.reg.lambda_reg = 0.0;
        spec.reg.lambda_area = 1.0;
        let mut problem = Problem {
            order: 1,
            raster: settings(8),
            spec,
            model: Model::Linear(model),
            image: Some(NaturalImage::filled(8, 8, 1, 0.5)),
        };
        // A circle of radius 3 covers the whole [-1, 1]² canvas.
        let eval = problem.evaluate(&FourierCoefficients::circle(1, 3.0)).unwrap();
        // The winding denominator's epsilon keeps interior values a hair below 1.
        assert!((eval.area - 1.0).abs() < 1e-9);
        assert!((eval.total - (0.5f64.ln() - eval.area)).abs() < 1e-12);
        assert!((eval.data - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn patch_data_terms() {
        let x = NaturalImage::filled(20, 20, 1, 0.5);
        let boxes = vec![BoundingBox::new(10.0, 10.0, 8.0, 8.0)];
        let mut spec = ObjectiveSpec::new(ObjectiveMode::PatchAttack, 0);
        spec.boxes = boxes;
        let c = FourierCoefficients::circle(1, 0.5);
        let raster = settings(8);
        let mut far = Model::Detector(SurrogateDetector { gain: 0.0, offset: -1e3 });
        let e = loss_patch_attack(&c, &x, &spec, &mut far, &raster).unwrap();
        assert_eq!(e.data, 0.0);
        let mut half = Model::Detector(SurrogateDetector { gain: 0.0, offset: 0.0 });
        let e = loss_patch_attack(&c, &x, &spec, &mut half, &raster).unwrap();
        assert!((e.data - 2f64.ln()).abs() < 1e-15);
        assert!(!e.success);
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let spec = ObjectiveSpec::new(ObjectiveMode::SaliencyKeep, 0);
        let mut m = Model::Linear(toy::pro_area_linear());
        let c = FourierCoefficients::circle(1, 0.5);
        assert!(loss_generate(&c, &spec, &mut m, &settings(64)).is_err());
        let mut spec = ObjectiveSpec::new(ObjectiveMode::PatchAttack, 0);
        assert!(spec.validate().is_err());
        spec.boxes.push(BoundingBox::new(1.0, 1.0, 1.0, 1.0));
        spec.patch_scale = 1.5;
        assert!(spec.validate().is_err());
    }
}
