//! Winding-number rasterization of Fourier contours and its adjoint.
//!
//! Each pixel centre `(x0, y0)` receives the discrete winding sum
//!
//! ```text
//! W = (1/N) Σ_j [(f_j - x0) g'_j - (g_j - y0) f'_j] / [(f_j - x0)² + (g_j - y0)² + ε]
//! ```
//!
//! over `N` uniform samples of the contour. The normalized mask is
//! `clamp(|W|, 0, 1)`, so regions winding `+1` and `-1` both count as interior.
//!
//! The backward pass differentiates the summand in closed form with respect
//! to `f, g, f', g'`, accumulates per-sample adjoints over pixels in row-major
//! order, then maps them onto `(a_k, b_k)`. No step uses numerical
//! differentiation.

use serde::{Deserialize, Serialize};

use crate::contour::{sample_contour, sampling_floor, ContourSamples, FourierCoefficients};
use crate::error::{Error, Result};

/// Denominator regularizer `ε`, in squared canvas units.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Pixel grid and the canvas window it covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CanvasSpec {
    pub width: usize,
    pub height: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub epsilon: f64,
}

impl Default for CanvasSpec {
    fn default() -> Self {
        Self::square(224)
    }
}

impl CanvasSpec {
    /// `size × size` pixels over `[-1, 1]²`.
    pub fn square(size: usize) -> Self {
        Self {
            width: size,
            height: size,
            x_range: [-1.0, 1.0],
            y_range: [-1.0, 1.0],
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "canvas must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        for (name, r) in [("x_range", self.x_range), ("y_range", self.y_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] != r[1]) {
                return Err(Error::Config(format!("{name} {r:?} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Horizontal pixel pitch in canvas units.
    pub fn pitch_x(&self) -> f64 {
        (self.x_range[1] - self.x_range[0]) / self.width as f64
    }

    pub fn pitch_y(&self) -> f64 {
        (self.y_range[1] - self.y_range[0]) / self.height as f64
    }

    pub fn pixel_x(&self, col: usize) -> f64 {
        self.x_range[0] + (col as f64 + 0.5) * self.pitch_x()
    }

    pub fn pixel_y(&self, row: usize) -> f64 {
        self.y_range[0] + (row as f64 + 0.5) * self.pitch_y()
    }

    /// Canvas coordinates of the centre of `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> [f64; 2] {
        [self.pixel_x(col), self.pixel_y(row)]
    }
}

/// An `height × width` field on a canvas, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid {
    pub canvas: CanvasSpec,
    pub values: Vec<f64>,
}

impl RasterGrid {
    pub fn new(canvas: CanvasSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != canvas.pixel_count() {
            return Err(Error::InvalidInput(format!(
                "grid of {} values does not match {}x{} canvas",
                values.len(),
                canvas.height,
                canvas.width
            )));
        }
        Ok(Self { canvas, values })
    }

    pub fn filled(canvas: CanvasSpec, value: f64) -> Self {
        let values = vec![value; canvas.pixel_count()];
        Self { canvas, values }
    }

    pub fn width(&self) -> usize {
        self.canvas.width
    }

    pub fn height(&self) -> usize {
        self.canvas.height
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.canvas.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// `∂L/∂(a_k, b_k)` in the flat coefficient layout.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientGradient {
    pub order: usize,
    pub grads: Vec<f64>,
}

impl CoefficientGradient {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            grads: vec![0.0; 2 * (2 * order + 1)],
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &CoefficientGradient, scale: f64) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (g, o) in self.grads.iter_mut().zip(&other.grads) {
            *g += scale * o;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.is_finite())
    }
}

/// Struct-of-arrays view of contour samples for the hot loops.
struct SampleSoa {
    t: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    df: Vec<f64>,
    dg: Vec<f64>,
}

impl From<&ContourSamples> for SampleSoa {
    fn from(s: &ContourSamples) -> Self {
        Self {
            t: s.t.clone(),
            f: s.points.iter().map(|p| p[0]).collect(),
            g: s.points.iter().map(|p| p[1]).collect(),
            df: s.tangents.iter().map(|p| p[0]).collect(),
            dg: s.tangents.iter().map(|p| p[1]).collect(),
        }
    }
}

impl SampleSoa {
    fn new(c: &FourierCoefficients, n: usize) -> Result<Self> {
        Ok(Self::from(&sample_contour(c, n)?))
    }

    fn winding_at(&self, x0: f64, y0: f64, eps: f64) -> f64 {
        let mut sum = 0.0;
        for j in 0..self.f.len() {
            let dx = self.f[j] - x0;
            let dy = self.g[j] - y0;
            sum += (dx * self.dg[j] - dy * self.df[j]) / (dx * dx + dy * dy + eps);
        }
        sum / self.f.len() as f64
    }
}

fn check_samples(c: &FourierCoefficients, n: usize) -> Result<()> {
    let floor = sampling_floor(c.order());
    if n < floor {
        return Err(Error::Config(format!(
            "N = {n} is below the sampling floor 4K = {floor}"
        )));
    }
    Ok(())
}

/// Discrete winding number of the contour around `point`, with `ε = 1e-9`.
pub fn winding_number(c: &FourierCoefficients, point: [f64; 2], n: usize) -> Result<f64> {
    check_samples(c, n)?;
    if !(point[0].is_finite() && point[1].is_finite()) {
        return Err(Error::InvalidInput(format!("point {point:?} is not finite")));
    }
    Ok(SampleSoa::new(c, n)?.winding_at(point[0], point[1], DEFAULT_EPSILON))
}

/// Raw winding field at every pixel centre.
pub fn rasterize_raw(c: &FourierCoefficients, canvas: &CanvasSpec, n: usize) -> Result<RasterGrid> {
    canvas.validate()?;
    check_samples(c, n)?;
    let soa = SampleSoa::new(c, n)?;
    Ok(raw_from_samples(&soa, canvas))
}

fn raw_from_samples(soa: &SampleSoa, canvas: &CanvasSpec) -> RasterGrid {
    let mut values = Vec::with_capacity(canvas.pixel_count());
    for row in 0..canvas.height {
        let y0 = canvas.pixel_y(row);
        for col in 0..canvas.width {
            values.push(soa.winding_at(canvas.pixel_x(col), y0, canvas.epsilon));
        }
    }
    RasterGrid {
        canvas: canvas.clone(),
        values,
    }
}

/// `clamp(|raw|, 0, 1)` pointwise.
pub fn normalize(raw: &RasterGrid) -> RasterGrid {
    RasterGrid {
        canvas: raw.canvas.clone(),
        values: raw.values.iter().map(|&v| normalize_value(v)).collect(),
    }
}

#[inline]
pub fn normalize_value(v: f64) -> f64 {
    v.abs().clamp(0.0, 1.0)
}

/// Subgradient of [`normalize_value`]: `sign(v)` where `0 < |v| < 1`, else 0.
#[inline]
pub fn normalize_derivative(v: f64) -> f64 {
    let a = v.abs();
    if a > 0.0 && a < 1.0 {
        v.signum()
    } else {
        0.0
    }
}

/// Raw and normalized grids in one pass.
pub fn rasterize(c: &FourierCoefficients, canvas: &CanvasSpec, n: usize) -> Result<(RasterGrid, RasterGrid)> {
    let raw = rasterize_raw(c, canvas, n)?;
    let mask = normalize(&raw);
    Ok((raw, mask))
}

/// Adjoint of `normalize ∘ rasterize_raw`: `Σ_p upstream[p] · ∂I_norm(p)/∂(a_k, b_k)`.
pub fn rasterize_backward(
    c: &FourierCoefficients,
    canvas: &CanvasSpec,
    n: usize,
    upstream: &[f64],
) -> Result<CoefficientGradient> {
    canvas.validate()?;
    check_samples(c, n)?;
    check_upstream(canvas, upstream)?;
    let soa = SampleSoa::new(c, n)?;
    let raw = raw_from_samples(&soa, canvas);
    let weights: Vec<f64> = upstream
        .iter()
        .zip(&raw.values)
        .map(|(u, &r)| u * normalize_derivative(r))
        .collect();
    Ok(backward_from_weights(c, &soa, canvas, &weights))
}

/// Adjoint of `rasterize_raw` alone (no abs/clip).
pub fn rasterize_raw_backward(
    c: &FourierCoefficients,
    canvas: &CanvasSpec,
    n: usize,
    upstream: &[f64],
) -> Result<CoefficientGradient> {
    canvas.validate()?;
    check_samples(c, n)?;
    check_upstream(canvas, upstream)?;
    let soa = SampleSoa::new(c, n)?;
    Ok(backward_from_weights(c, &soa, canvas, upstream))
}

fn check_upstream(canvas: &CanvasSpec, upstream: &[f64]) -> Result<()> {
    if upstream.len() != canvas.pixel_count() {
        return Err(Error::InvalidInput(format!(
            "upstream has {} values, canvas is {}x{}",
            upstream.len(),
            canvas.height,
            canvas.width
        )));
    }
    Ok(())
}

fn backward_from_weights(
    c: &FourierCoefficients,
    soa: &SampleSoa,
    canvas: &CanvasSpec,
    weights: &[f64],
) -> CoefficientGradient {
    let n = soa.f.len();
    let inv_n = 1.0 / n as f64;
    let eps = canvas.epsilon;
    // Per-sample adjoints of f, g, f', g'.
    let mut adj_f = vec![0.0; n];
    let mut adj_g = vec![0.0; n];
    let mut adj_df = vec![0.0; n];
    let mut adj_dg = vec![0.0; n];

    for row in 0..canvas.height {
        let y0 = canvas.pixel_y(row);
        for col in 0..canvas.width {
            let w = weights[row * canvas.width + col];
            if w == 0.0 {
                continue;
            }
            let w = w * inv_n;
            let x0 = canvas.pixel_x(col);
            for j in 0..n {
                let dx = soa.f[j] - x0;
                let dy = soa.g[j] - y0;
                let inv_d = 1.0 / (dx * dx + dy * dy + eps);
                let num = dx * soa.dg[j] - dy * soa.df[j];
                let q = 2.0 * num * inv_d * inv_d;
                adj_f[j] += w * (soa.dg[j] * inv_d - q * dx);
                adj_g[j] += w * (-soa.df[j] * inv_d - q * dy);
                adj_df[j] -= w * dy * inv_d;
                adj_dg[j] += w * dx * inv_d;
            }
        }
    }

    let mut grad = CoefficientGradient::zeros(c.order());
    for (idx, (k, _, _)) in c.harmonics().enumerate() {
        let kf = k as f64;
        let (mut ga, mut gb) = (0.0, 0.0);
        for j in 0..n {
            let (s, co) = (kf * soa.t[j]).sin_cos();
            ga += adj_f[j] * co + adj_g[j] * s - adj_df[j] * kf * s + adj_dg[j] * kf * co;
            gb += -adj_f[j] * s + adj_g[j] * co - adj_df[j] * kf * co - adj_dg[j] * kf * s;
        }
        grad.grads[2 * idx] = ga;
        grad.grads[2 * idx + 1] = gb;
    }
    grad
}

/// `m` vertices of the contour at uniform parameter values; closed implicitly.
pub fn polygonize(c: &FourierCoefficients, m: usize) -> Result<Vec<[f64; 2]>> {
    if m < 3 {
        return Err(Error::InvalidInput(format!(
            "a polygon needs at least 3 vertices, got {m}"
        )));
    }
    c.validate()?;
    Ok((0..m)
        .map(|j| crate::contour::eval_point(c, crate::contour::sample_t(j, m)))
        .collect())
}

pub fn perimeter(polygon: &[[f64; 2]]) -> f64 {
    let n = polygon.len();
    (0..n)
        .map(|i| {
            let a = polygon[i];
            let b = polygon[(i + 1) % n];
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .sum()
}
