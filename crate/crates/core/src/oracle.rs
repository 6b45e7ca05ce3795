//! Brute-force references for checking the rasterizer and its gradients.
//!
//! These share nothing with the modules they check beyond contour
//! evaluation: finite differences re-run the forward pass, point-in-polygon
//! uses even-odd ray casting on a dense polygonization, and quadrature sums
//! the winding integrand at a very high sample count.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::contour::{evaluate_contour, evaluate_derivative, FourierCoefficients};
use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::raster::{normalize_value, rasterize_backward, rasterize_raw, CanvasSpec, DEFAULT_EPSILON};

/// Finite-difference stencil.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    /// `(f(p+h) - f(p-h)) / 2h`
    #[default]
    Central,
    /// `(-f(p+2h) + 8f(p+h) - 8f(p-h) + f(p-2h)) / 12h`
    Central4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiniteDiffConfig {
    pub h: f64,
    pub scheme: FdScheme,
    /// Half-width, in raw winding units, of the bands around `0` and `±1`
    /// where the normalization kinks live.
    pub kink_exclusion_band: f64,
}

impl Default for FiniteDiffConfig {
    fn default() -> Self {
        Self { h: 1e-5, scheme: FdScheme::Central, kink_exclusion_band: 5e-3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdGradient {
    /// Estimate from the configured scheme.
    pub grad: Vec<f64>,
    /// Two-point central estimate from the `±h` probes.
    pub grad_2pt: Vec<f64>,
    /// Parameters whose probes moved some watched value across a kink.
    pub flagged: Vec<bool>,
}

/// Finite differences of `loss` at `params`.
pub fn fd_gradient(
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
    cfg: &FiniteDiffConfig,
) -> Result<FdGradient> {
    fd_gradient_with_kinks(|p| Ok((loss(p)?, Vec::new())), params, cfg)
}

/// Finite differences where `eval` also returns values (raw winding numbers)
/// whose crossing of `0` or `±1` marks a kink. A parameter is flagged when a
/// value near a kink lands on different sides of it across the `±h` probes.
/// "Near" means within the exclusion band, widened to the value's own probe
/// spread so steep pixels that jump over a kink count too.
pub fn fd_gradient_with_kinks(
    mut eval: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    params: &[f64],
    cfg: &FiniteDiffConfig,
) -> Result<FdGradient> {
    if !(cfg.h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {}", cfg.h)));
    }
    let offsets: &[f64] = match cfg.scheme {
        FdScheme::Central => &[1.0, -1.0],
        FdScheme::Central4 => &[1.0, -1.0, 2.0, -2.0],
    };
    let (_, base) = eval(params)?;
    let mut out = FdGradient { grad: vec![], grad_2pt: vec![], flagged: vec![] };
    let mut p = params.to_vec();
    for i in 0..params.len() {
        let mut losses = Vec::with_capacity(offsets.len());
        let mut watched = Vec::with_capacity(offsets.len());
        for &o in offsets {
            p[i] = params[i] + o * cfg.h;
            let (l, w) = eval(&p)?;
            if !l.is_finite() {
                return Err(Error::Numeric(format!("loss is not finite while probing parameter {i}")));
            }
            losses.push(l);
            watched.push(w);
        }
        p[i] = params[i];
        let crosses = |probes: &[Vec<f64>]| {
            base.iter().enumerate().any(|(j, &b)| {
                let spread = probes.iter().map(|w| (w[j] - b).abs()).fold(0.0, f64::max);
                // Crossings that move a value by less than 1e-10 cannot bias the quotient.
                spread > 1e-10
                    && near_kink(b, cfg.kink_exclusion_band.max(spread))
                    && probes.iter().any(|w| branch(w[j]) != branch(b))
            })
        };
        let inner = crosses(&watched[..2]);
        let two = (losses[0] - losses[1]) / (2.0 * cfg.h);
        out.grad_2pt.push(two);
        out.grad.push(match cfg.scheme {
            FdScheme::Central => two,
            // A kink between h and 2h only spoils the outer probes; fall back to ±h.
            FdScheme::Central4 if !inner && crosses(&watched[2..]) => two,
            FdScheme::Central4 => (8.0 * (losses[0] - losses[1]) - (losses[2] - losses[3])) / (12.0 * cfg.h),
        });
        out.flagged.push(inner);
    }
    Ok(out)
}

fn near_kink(v: f64, band: f64) -> bool {
    [-1.0, 0.0, 1.0].iter().any(|k| (v - k).abs() <= band)
}

/// Smooth piece of `clamp(|v|, 0, 1)` that `v` lies on.
fn branch(v: f64) -> u8 {
    match v {
        v if v <= -1.0 => 0,
        v if v <= 0.0 => 1,
        v if v < 1.0 => 2,
        _ => 3,
    }
}

/// Agreement rule: `|analytic - numeric| <= abs_tol` or relative error `<= rel_tol`.
pub fn grads_agree(analytic: f64, numeric: f64, rel_tol: f64, abs_tol: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_tol || diff <= rel_tol * analytic.abs().max(numeric.abs())
}

/// Relative and absolute tolerances of a gradient check.
pub const GRAD_REL_TOL: f64 = 1e-3;
pub const GRAD_ABS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub numeric_2pt: f64,
    pub excluded: bool,
    pub agrees: bool,
    pub agrees_2pt: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradcheckReport {
    fn build(analytic: &[f64], fd: FdGradient) -> Self {
        let params = (0..analytic.len())
            .map(|index| {
                let (a, n, n2) = (analytic[index], fd.grad[index], fd.grad_2pt[index]);
                ParamCheck {
                    index,
                    analytic: a,
                    numeric: n,
                    numeric_2pt: n2,
                    excluded: fd.flagged[index],
                    agrees: grads_agree(a, n, GRAD_REL_TOL, GRAD_ABS_TOL),
                    agrees_2pt: grads_agree(a, n2, GRAD_REL_TOL, GRAD_ABS_TOL),
                }
            })
            .collect();
        Self { params }
    }

    pub fn checked(&self) -> usize {
        self.params.iter().filter(|p| !p.excluded).count()
    }

    pub fn excluded(&self) -> usize {
        self.params.len() - self.checked()
    }

    pub fn passed(&self) -> usize {
        self.params.iter().filter(|p| !p.excluded && p.agrees).count()
    }

    /// Agreement of the two-point estimate, over the same parameters.
    pub fn passed_2pt(&self) -> usize {
        self.params.iter().filter(|p| !p.excluded && p.agrees_2pt).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.excluded && !p.agrees)
    }
}

/// Checks the adjoint of `Σ upstream · normalize(rasterize_raw(c))`.
pub fn gradcheck_raster(
    c: &FourierCoefficients,
    canvas: &CanvasSpec,
    n: usize,
    upstream: &[f64],
    cfg: &FiniteDiffConfig,
) -> Result<GradcheckReport> {
    let analytic = rasterize_backward(c, canvas, n, upstream)?;
    let order = c.order();
    let fd = fd_gradient_with_kinks(
        |p| {
            let raw = rasterize_raw(&FourierCoefficients::from_params(order, p.to_vec())?, canvas, n)?;
            let loss = raw.values.iter().zip(upstream).map(|(&v, u)| u * normalize_value(v)).sum();
            let watched = raw.values.iter().zip(upstream).filter(|(_, &u)| u != 0.0).map(|(&v, _)| v).collect();
            Ok((loss, watched))
        },
        c.params(),
        cfg,
    )?;
    Ok(GradcheckReport::build(&analytic.grads, fd))
}

/// Checks a problem's end-to-end gradient at `c`. Every pixel's raw winding
/// value is watched for kink crossings.
pub fn gradcheck_problem(problem: &mut Problem, c: &FourierCoefficients, cfg: &FiniteDiffConfig) -> Result<GradcheckReport> {
    let analytic = problem.evaluate(c)?.grad;
    let order = c.order();
    let canvas = problem.raster.canvas.clone();
    let n = problem.raster.samples;
    let fd = fd_gradient_with_kinks(
        |p| {
            let c = FourierCoefficients::from_params(order, p.to_vec())?;
            let raw = rasterize_raw(&c, &canvas, n)?;
            Ok((problem.evaluate(&c)?.total, raw.values))
        },
        c.params(),
        cfg,
    )?;
    Ok(GradcheckReport::build(&analytic.grads, fd))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Inside,
    Outside,
    Boundary,
}

/// Even-odd ray casting; points within `1e-9` of an edge are `Boundary`.
pub fn point_in_polygon(point: [f64; 2], polygon: &[[f64; 2]]) -> Result<Location> {
    if polygon.len() < 3 {
        return Err(Error::InvalidInput(format!("polygon has {} vertices", polygon.len())));
    }
    let area2: f64 = (0..polygon.len())
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % polygon.len()]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    if area2.abs() < 1e-300 {
        return Err(Error::InvalidInput("polygon is degenerate (zero area)".into()));
    }
    let [px, py] = point;
    let mut inside = false;
    let n = polygon.len();
    for i in 0..n {
        let [x1, y1] = polygon[i];
        let [x2, y2] = polygon[(i + 1) % n];
        if segment_distance(point, [x1, y1], [x2, y2]) <= 1e-9 {
            return Ok(Location::Boundary);
        }
        if (y1 > py) != (y2 > py) {
            let x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    Ok(if inside { Location::Inside } else { Location::Outside })
}

pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Distance from `p` to the closed polygon's boundary.
pub fn polygon_distance(p: [f64; 2], polygon: &[[f64; 2]]) -> f64 {
    let n = polygon.len();
    (0..n)
        .map(|i| segment_distance(p, polygon[i], polygon[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Even-odd polygonization of the contour at `m` uniform parameter values,
/// evaluated point by point.
pub fn dense_polygon(c: &FourierCoefficients, m: usize) -> Result<Vec<[f64; 2]>> {
    (0..m).map(|j| evaluate_contour(c, TAU * j as f64 / m as f64)).collect()
}

/// Winding integrand summed at `n_hi` uniform samples.
pub fn quadrature_winding(c: &FourierCoefficients, point: [f64; 2], n_hi: usize) -> Result<f64> {
    if n_hi < 4096 {
        return Err(Error::Config(format!("quadrature needs at least 4096 samples, got {n_hi}")));
    }
    let [x0, y0] = point;
    let mut total = 0.0;
    let mut comp = 0.0;
    for j in 0..n_hi {
        let t = TAU * j as f64 / n_hi as f64;
        let [f, g] = evaluate_contour(c, t)?;
        let [df, dg] = evaluate_derivative(c, t)?;
        let (dx, dy) = (f - x0, g - y0);
        let term = (dx * dg - dy * df) / (dx * dx + dy * dy + DEFAULT_EPSILON);
        // Kahan summation keeps the reference tight at large n_hi.
        let y = term - comp;
        let s = total + y;
        comp = (s - total) - y;
        total = s;
    }
    Ok(total / n_hi as f64)
}
