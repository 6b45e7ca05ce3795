//! Objectives that score a rasterized shape through a model.

pub mod image;
pub mod loss;
pub mod model;
pub mod toy;

pub use image::{composite_mask, composite_mask_adjoint, render_patch, BoundingBox, NaturalImage, PatchRender};
pub use loss::{
    loss_generate, loss_patch_attack, loss_saliency_keep, loss_saliency_occlude, LossEval, ObjectiveMode,
    ObjectiveSpec, Problem, RasterSettings,
};
pub use model::{ClassOutput, DetectOutput, LinearModel, MlpModel, Model, ModelBinding, SurrogateDetector};
