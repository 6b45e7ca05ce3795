//! Deterministic toy models and scenes for desk-scale experiments.
//!
//! Nothing here is trained. Weights are constructed in closed form so every
//! run that uses them is reproducible bit for bit.

use crate::contour::FourierCoefficients;
use crate::error::{Error, Result};
use crate::objective::image::{BoundingBox, NaturalImage};
use crate::objective::model::{LinearModel, MlpModel};
use crate::raster::{rasterize, CanvasSpec};

/// Canvas size of the `shapes3` classifier.
pub const SHAPES3_SIZE: usize = 32;
/// Canvas size of the `pro-area` classifier.
pub const PRO_AREA_SIZE: usize = 64;
/// Canvas size of the `quadrant` classifier and scene.
pub const QUADRANT_SIZE: usize = 32;

pub const SHAPES3_CLASSES: [&str; 3] = ["disc", "star", "clover"];

/// Silhouettes the `shapes3` classes respond to. All three enclose the same
/// area, `π·0.55²`.
pub fn shapes3_templates() -> Vec<FourierCoefficients> {
    const R: f64 = 0.55;
    const LOBE: f64 = 0.13;
    let disc = FourierCoefficients::circle(4, R);
    // Area of a Fourier contour is π·Σ k|c_k|², so a lobe term at -k needs
    // |c_1|² = R² + k·LOBE².
    let mut star = FourierCoefficients::circle(4, (R * R + 4.0 * LOBE * LOBE).sqrt());
    star.set(-4, LOBE, 0.0);
    let mut clover = FourierCoefficients::circle(4, (R * R + 2.0 * LOBE * LOBE).sqrt());
    clover.set(-2, LOBE, 0.0);
    vec![disc, star, clover]
}

/// Three-class MLP over 32×32 grayscale shape images.
///
/// Hidden unit `h` is `tanh(α·⟨x, 2T_h − 1⟩ / |T_h|) = tanh(α·(1 − |x Δ T_h| / |T_h|))`
/// for binary `x`: one minus the symmetric difference with template `T_h`,
/// relative to the template's area. A shape inside every template scores
/// the same on all units. The head scales each unit into its class logit.
pub fn shapes3_mlp() -> MlpModel {
    const ALPHA: f64 = 1.0;
    const BETA: f64 = 20.0;
    let canvas = CanvasSpec::square(SHAPES3_SIZE);
    let p = canvas.pixel_count();
    let templates = shapes3_templates();
    let h = templates.len();
    let mut w1 = Vec::with_capacity(h * p);
    for t in &templates {
        let (_, mask) = rasterize(t, &canvas, 256).expect("template rasterizes");
        let bin: Vec<f64> = mask.values.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        let area: f64 = bin.iter().sum();
        w1.extend(bin.iter().map(|&b| ALPHA * (2.0 * b - 1.0) / area));
    }
    let mut w2 = vec![0.0; h * h];
    for i in 0..h {
        w2[i * h + i] = BETA;
    }
    MlpModel::new([SHAPES3_SIZE, SHAPES3_SIZE, 1], h, h, [w1, vec![0.0; h], w2, vec![0.0; h]])
        .expect("shapes3 is consistent")
}

/// Two-class linear model whose class 0 logit grows with mask area:
/// `logit_0 = 10·mean(x)`, `logit_1 = 3`.
pub fn pro_area_linear() -> LinearModel {
    let p = PRO_AREA_SIZE * PRO_AREA_SIZE;
    let mut weight = vec![10.0 / p as f64; p];
    weight.extend(std::iter::repeat(0.0).take(p));
    LinearModel::new([PRO_AREA_SIZE, PRO_AREA_SIZE, 1], 2, weight, vec![0.0, 3.0]).expect("pro-area is consistent")
}

/// Canvas coordinates of the evidence blob in the `quadrant` scene.
pub const QUADRANT_CENTRE: [f64; 2] = [0.5, 0.5];
const QUADRANT_SIGMA: f64 = 0.2;

fn quadrant_blob(canvas: &CanvasSpec, row: usize, col: usize) -> f64 {
    let [x, y] = canvas.pixel_center(col, row);
    let d2 = (x - QUADRANT_CENTRE[0]).powi(2) + (y - QUADRANT_CENTRE[1]).powi(2);
    (-d2 / (2.0 * QUADRANT_SIGMA * QUADRANT_SIGMA)).exp()
}

/// 32×32 grayscale scene with a bright blob in the `x > 0, y > 0` quadrant.
pub fn quadrant_image() -> NaturalImage {
    let canvas = CanvasSpec::square(QUADRANT_SIZE);
    let mut values = Vec::with_capacity(canvas.pixel_count());
    for row in 0..canvas.height {
        for col in 0..canvas.width {
            values.push(0.3 + 0.6 * quadrant_blob(&canvas, row, col));
        }
    }
    NaturalImage::new(QUADRANT_SIZE, QUADRANT_SIZE, 1, values).expect("scene in range")
}

/// Two-class linear model whose weights are nonzero only in the evidence
/// quadrant. On the unmasked [`quadrant_image`], `logit_0 = 8` and
/// `logit_1 = 4`; class 0 stays top-1 while at least half of the weighted
/// evidence is kept.
pub fn quadrant_linear() -> LinearModel {
    let canvas = CanvasSpec::square(QUADRANT_SIZE);
    let x = quadrant_image();
    let p = canvas.pixel_count();
    let mut w = vec![0.0; p];
    for row in 0..canvas.height {
        for col in 0..canvas.width {
            let [cx, cy] = canvas.pixel_center(col, row);
            if cx > 0.0 && cy > 0.0 {
                w[row * canvas.width + col] = quadrant_blob(&canvas, row, col);
            }
        }
    }
    let norm: f64 = w.iter().zip(&x.values).map(|(a, b)| a * b).sum();
    let mut weight: Vec<f64> = w.iter().map(|v| 8.0 * v / norm).collect();
    weight.extend(std::iter::repeat(0.0).take(p));
    LinearModel::new([QUADRANT_SIZE, QUADRANT_SIZE, 1], 2, weight, vec![0.0, 4.0]).expect("quadrant is consistent")
}

/// Surrogate detector gain and offset used with [`person_scene`].
pub const PERSON_DETECTOR: (f64, f64) = (-14.0, 4.2);

/// 64×64 RGB scene: grey background with one dark upright figure and its box.
pub fn person_scene() -> (NaturalImage, Vec<BoundingBox>) {
    let (h, w) = (64, 64);
    let mut b = BoundingBox::new(32.0, 32.0, 24.0, 40.0);
    b.label = "person".into();
    let (cols, rows) = b.pixel_span();
    let mut values = vec![0.6; h * w * 3];
    for row in rows {
        for col in cols.clone() {
            for c in 0..3 {
                values[(row * w + col) * 3 + c] = 0.1;
            }
        }
    }
    (NaturalImage::new(h, w, 3, values).expect("scene in range"), vec![b])
}

pub fn linear_preset(name: &str) -> Result<LinearModel> {
    match name {
        "pro-area" => Ok(pro_area_linear()),
        "quadrant" => Ok(quadrant_linear()),
        _ => Err(Error::Config(format!("unknown builtin-linear preset {name:?} (pro-area, quadrant)"))),
    }
}

pub fn mlp_preset(name: &str) -> Result<MlpModel> {
    match name {
        "shapes3" => Ok(shapes3_mlp()),
        _ => Err(Error::Config(format!("unknown builtin-mlp preset {name:?} (shapes3)"))),
    }
}

/// Scene presets: `(image, boxes)`; boxes are empty where unused.
pub fn scene_preset(name: &str) -> Result<(NaturalImage, Vec<BoundingBox>)> {
    match name {
        "quadrant" => Ok((quadrant_image(), vec![])),
        "person" => Ok(person_scene()),
        _ => Err(Error::Config(format!("unknown scene preset {name:?} (quadrant, person)"))),
    }
}
