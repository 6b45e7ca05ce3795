//! Spectral plausibility prior and the mask-area term.
//!
//! The prior penalizes spectra whose harmonics (`|k| >= 2`) outweigh the
//! fundamental pair `c_{±1}`:
//!
//! ```text
//! L_reg = ReLU(λ·S_harm − S_fund) + Σ_{|k|>=2} ReLU(|c_k| − γ·S_fund)
//! S_fund = |c_1| + |c_{-1}|,   S_harm = Σ_{|k|>=2} |c_k|
//! ```
//!
//! `c_0` (the centroid) takes no part in either sum.

use serde::{Deserialize, Serialize};

use crate::contour::FourierCoefficients;
use crate::error::{Error, Result};
use crate::raster::{CoefficientGradient, RasterGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizerConfig {
    /// Fundamental dominance factor, `> 1`.
    pub lambda: f64,
    /// Per-harmonic cap as a fraction of `S_fund`, in `(0, 1)`.
    pub gamma: f64,
    /// Weight of `L_reg` in the total loss.
    pub lambda_reg: f64,
    /// Weight of the mask-area term.
    pub lambda_area: f64,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            gamma: 0.25,
            lambda_reg: 0.1,
            lambda_area: 1.0,
        }
    }
}

impl RegularizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 1.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must exceed 1, got {}", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        for (name, w) in [("lambda_reg", self.lambda_reg), ("lambda_area", self.lambda_area)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// `(S_fund, S_harm)`.
pub fn fundamental_and_harmonic_sums(c: &FourierCoefficients) -> (f64, f64) {
    let mut fund = 0.0;
    let mut harm = 0.0;
    for (k, a, b) in c.harmonics() {
        match k.unsigned_abs() {
            0 => {}
            1 => fund += a.hypot(b),
            _ => harm += a.hypot(b),
        }
    }
    (fund, harm)
}

/// `(a, b)/|c|`, defined as zero at the origin.
fn modulus_grad(a: f64, b: f64) -> (f64, f64) {
    let r = a.hypot(b);
    if r > 0.0 {
        (a / r, b / r)
    } else {
        (0.0, 0.0)
    }
}

/// `L_reg` and its subgradient.
pub fn reg_loss(c: &FourierCoefficients, cfg: &RegularizerConfig) -> (f64, CoefficientGradient) {
    let (fund, harm) = fundamental_and_harmonic_sums(c);
    let mut grad = CoefficientGradient::zeros(c.order());
    let mut value = 0.0;

    // Accumulated d(value)/d(S_fund) and d(value)/d(S_harm).
    let mut d_fund = 0.0;
    let mut d_harm = 0.0;

    let dominance = cfg.lambda * harm - fund;
    if dominance > 0.0 {
        value += dominance;
        d_fund -= 1.0;
        d_harm += cfg.lambda;
    }

    for (k, a, b) in c.harmonics() {
        if k.unsigned_abs() < 2 {
            continue;
        }
        let excess = a.hypot(b) - cfg.gamma * fund;
        if excess > 0.0 {
            value += excess;
            d_fund -= cfg.gamma;
            let (ga, gb) = modulus_grad(a, b);
            let i = c.index_of(k);
            grad.grads[i] += ga;
            grad.grads[i + 1] += gb;
        }
    }

    for (k, a, b) in c.harmonics() {
        let scale = match k.unsigned_abs() {
            0 => continue,
            1 => d_fund,
            _ => d_harm,
        };
        if scale == 0.0 {
            continue;
        }
        let (ga, gb) = modulus_grad(a, b);
        let i = c.index_of(k);
        grad.grads[i] += scale * ga;
        grad.grads[i + 1] += scale * gb;
    }

    (value, grad)
}

/// `mean(I)` and its adjoint `1/(H·W)` per pixel.
pub fn area_term(mask: &RasterGrid) -> (f64, Vec<f64>) {
    let n = mask.values.len();
    (mask.mean(), vec![1.0 / n as f64; n])
}
