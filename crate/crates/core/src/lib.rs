//! Closed 2D shapes as truncated Fourier series, rasterized by a
//! differentiable winding-number sum and optimized with Adam against
//! classifier and detector objectives.
//!
//! ```
//! use fourier_shapes::{rasterize, CanvasSpec, FourierCoefficients};
//!
//! let c = FourierCoefficients::circle(3, 0.5);
//! let (_raw, mask) = rasterize(&c, &CanvasSpec::square(64), 256).unwrap();
//! assert!((mask.mean() - std::f64::consts::PI / 16.0).abs() < 0.01);
//! ```

pub mod adapter;
pub mod config;
pub mod contour;
pub mod error;
pub mod export;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod raster;
pub mod regularizer;

pub use config::RunConfig;
pub use contour::{evaluate_contour, evaluate_derivative, sample_contour, FourierCoefficients};
pub use error::{Error, Result};
pub use objective::{ObjectiveMode, ObjectiveSpec, Problem};
pub use optimizer::{run_optimization, OptimizationTrace, OptimizerConfig, TraceSink};
pub use raster::{
    normalize, rasterize, rasterize_backward, rasterize_raw, winding_number, CanvasSpec, CoefficientGradient,
    RasterGrid,
};
pub use regularizer::{reg_loss, RegularizerConfig};
