//! Closed contours as truncated complex Fourier series.
//!
//! A contour is `F(t) = Σ_{k=-K}^{K} c_k e^{ikt}` for `t ∈ [0, 2π)`, with the
//! real part giving `x` and the imaginary part `y`. Coefficients are stored as
//! a flat real vector `[a_{-K}, b_{-K}, ..., a_K, b_K]`; gradients and
//! optimizer state share that layout.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The complex spectrum `{c_k}`, `k = -K..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoefficients {
    order: usize,
    params: Vec<f64>,
}

impl FourierCoefficients {
    /// All-zero spectrum of harmonic order `order`.
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            params: vec![0.0; 2 * (2 * order + 1)],
        }
    }

    /// Circle of the given radius centred at the origin, traced counter-clockwise.
    pub fn circle(order: usize, radius: f64) -> Self {
        assert!(order >= 1, "a circle needs K >= 1");
        let mut c = Self::zeros(order);
        c.set(1, radius, 0.0);
        c
    }

    /// Wraps a flat `[a_{-K}, b_{-K}, ..., a_K, b_K]` vector.
    pub fn from_params(order: usize, params: Vec<f64>) -> Result<Self> {
        let expected = 2 * (2 * order + 1);
        if params.len() != expected {
            return Err(Error::InvalidInput(format!(
                "K = {order} needs {expected} real parameters, got {}",
                params.len()
            )));
        }
        let c = Self { order, params };
        c.validate()?;
        Ok(c)
    }

    /// Builds from `(a_k, b_k)` pairs ordered `k = -K..=K`.
    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        if pairs.len() % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "coefficient count must be odd (2K+1), got {}",
                pairs.len()
            )));
        }
        let order = (pairs.len() - 1) / 2;
        Self::from_params(order, pairs.iter().flatten().copied().collect())
    }

    /// Harmonic order `K`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of complex coefficients, `2K + 1`.
    pub fn len(&self) -> usize {
        2 * self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    /// Position of `a_k` in the flat parameter vector (`b_k` follows it).
    pub fn index_of(&self, k: i64) -> usize {
        assert!(
            k.unsigned_abs() as usize <= self.order,
            "harmonic {k} outside K = {}",
            self.order
        );
        2 * (k + self.order as i64) as usize
    }

    /// `(a_k, b_k)`.
    pub fn get(&self, k: i64) -> (f64, f64) {
        let i = self.index_of(k);
        (self.params[i], self.params[i + 1])
    }

    pub fn set(&mut self, k: i64, re: f64, im: f64) {
        let i = self.index_of(k);
        self.params[i] = re;
        self.params[i + 1] = im;
    }

    /// Iterates `(k, a_k, b_k)` for `k = -K..=K`.
    pub fn harmonics(&self) -> impl Iterator<Item = (i64, f64, f64)> + '_ {
        let k0 = -(self.order as i64);
        self.params
            .chunks_exact(2)
            .enumerate()
            .map(move |(i, ab)| (k0 + i as i64, ab[0], ab[1]))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.params.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coefficient parameter {i} is not finite ({})",
                self.params[i]
            )));
        }
        Ok(())
    }

    /// Translates the contour by adding `(dx, dy)` to `c_0`.
    pub fn translate(&mut self, dx: f64, dy: f64) {
        let i = self.index_of(0);
        self.params[i] += dx;
        self.params[i + 1] += dy;
    }

    /// The same contour traversed in the opposite direction: `F(-t)`, i.e. `c_k -> c_{-k}`.
    pub fn reversed(&self) -> Self {
        let mut out = Self::zeros(self.order);
        for (k, a, b) in self.harmonics() {
            out.set(-k, a, b);
        }
        out
    }

    /// Re-expresses the spectrum at a larger (or equal) harmonic order.
    pub fn with_order(&self, order: usize) -> Self {
        let mut out = Self::zeros(order);
        for (k, a, b) in self.harmonics() {
            if k.unsigned_abs() as usize <= order {
                out.set(k, a, b);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&CoefficientFile::from(self)).expect("coefficients serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CoefficientFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "coefficient file".into(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        file.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// On-disk form: `{"K": int, "coeffs": [[a, b], ...]}` ordered `k = -K..=K`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientFile {
    #[serde(rename = "K")]
    pub order: usize,
    pub coeffs: Vec<[f64; 2]>,
}

impl From<&FourierCoefficients> for CoefficientFile {
    fn from(c: &FourierCoefficients) -> Self {
        Self {
            order: c.order,
            coeffs: c.params.chunks_exact(2).map(|ab| [ab[0], ab[1]]).collect(),
        }
    }
}

impl TryFrom<CoefficientFile> for FourierCoefficients {
    type Error = Error;

    fn try_from(file: CoefficientFile) -> Result<Self> {
        let expected = 2 * file.order + 1;
        if file.coeffs.len() != expected {
            return Err(Error::InvalidInput(format!(
                "K = {} requires {expected} coefficient pairs, file has {}",
                file.order,
                file.coeffs.len()
            )));
        }
        FourierCoefficients::from_pairs(&file.coeffs)
    }
}

/// Uniform samples of a contour and its parameter-derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourSamples {
    pub t: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub tangents: Vec<[f64; 2]>,
}

impl ContourSamples {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Smallest admissible sample count for harmonic order `order`.
pub fn sampling_floor(order: usize) -> usize {
    (4 * order).max(1)
}

/// Default sample count, `max(256, 8K)`.
pub fn default_samples(order: usize) -> usize {
    (8 * order).max(256)
}

/// `F(t)` as `(x, y)`.
pub fn evaluate_contour(c: &FourierCoefficients, t: f64) -> Result<[f64; 2]> {
    c.validate()?;
    check_t(t)?;
    Ok(eval_point(c, t))
}

/// `F'(t) = Σ ik c_k e^{ikt}` as `(dx/dt, dy/dt)`.
pub fn evaluate_derivative(c: &FourierCoefficients, t: f64) -> Result<[f64; 2]> {
    c.validate()?;
    check_t(t)?;
    Ok(eval_tangent(c, t))
}

/// Samples `t_j = j·2π/N` for `j = 0..N`.
pub fn sample_contour(c: &FourierCoefficients, n: usize) -> Result<ContourSamples> {
    c.validate()?;
    let floor = sampling_floor(c.order());
    if n < floor {
        return Err(Error::Config(format!(
            "N = {n} is below the sampling floor 4K = {floor} for K = {}",
            c.order()
        )));
    }
    let t: Vec<f64> = (0..n).map(|j| sample_t(j, n)).collect();
    let points = t.iter().map(|&t| eval_point(c, t)).collect();
    let tangents = t.iter().map(|&t| eval_tangent(c, t)).collect();
    Ok(ContourSamples {
        t,
        points,
        tangents,
    })
}

/// `|c_k|` for `k = -K..=K`.
pub fn amplitude_spectrum(c: &FourierCoefficients) -> Result<Vec<f64>> {
    c.validate()?;
    Ok(c.harmonics().map(|(_, a, b)| a.hypot(b)).collect())
}

/// `j·2π/N`, computed so that nested grids share bit-identical parameters.
pub(crate) fn sample_t(j: usize, n: usize) -> f64 {
    TAU * (j as f64) / (n as f64)
}

fn check_t(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("parameter t = {t} is not finite")))
    }
}

// Angles are reduced by k·t mod 2π through `sin_cos` of the product directly;
// for the modest K used here that is accurate to a few ulps.
pub(crate) fn eval_point(c: &FourierCoefficients, t: f64) -> [f64; 2] {
    let (mut x, mut y) = (0.0, 0.0);
    for (k, a, b) in c.harmonics() {
        let (s, co) = (k as f64 * t).sin_cos();
        x += a * co - b * s;
        y += a * s + b * co;
    }
    [x, y]
}

pub(crate) fn eval_tangent(c: &FourierCoefficients, t: f64) -> [f64; 2] {
    let (mut dx, mut dy) = (0.0, 0.0);
    for (k, a, b) in c.harmonics() {
        let kf = k as f64;
        let (s, co) = (kf * t).sin_cos();
        dx += kf * (-a * s - b * co);
        dy += kf * (a * co - b * s);
    }
    [dx, dy]
}
