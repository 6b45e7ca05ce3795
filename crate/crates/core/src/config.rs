//! Run-config documents and their binding into a [`Problem`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contour::default_samples;
use crate::error::{Error, Result};
use crate::objective::toy::scene_preset;
use crate::objective::{BoundingBox, ModelBinding, NaturalImage, ObjectiveMode, ObjectiveSpec, Problem, RasterSettings};
use crate::optimizer::{Init, OptimizerConfig};
use crate::raster::CanvasSpec;
use crate::regularizer::RegularizerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSection {
    #[serde(rename = "K")]
    pub order: usize,
    /// Contour samples; defaults to `max(256, 8K)`.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub canvas: CanvasSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageSource {
    Png(PathBuf),
    Preset(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub mode: ObjectiveMode,
    /// Target class (`generate`) or true class (saliency modes).
    #[serde(default, alias = "target_label", alias = "true_label")]
    pub label: usize,
    pub model: ModelBinding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSource>,
    /// Overrides the boxes a scene preset carries.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_color: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub shape: ShapeSection,
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "run config".into(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(ImageSource::Png(p)) = &mut self.objective.image {
            fix(p);
        }
        match &mut self.objective.model {
            ModelBinding::BuiltinLinear { weights: Some(p), .. } | ModelBinding::BuiltinMlp { weights: Some(p), .. } => {
                fix(p)
            }
            _ => {}
        }
        if let Init::File { path } = &mut self.optimizer.init {
            fix(path);
        }
    }

    pub fn samples(&self) -> usize {
        self.shape.samples.unwrap_or_else(|| default_samples(self.shape.order))
    }

    pub fn objective_spec(&self) -> Result<ObjectiveSpec> {
        let o = &self.objective;
        let mut spec = ObjectiveSpec::new(o.mode, o.label);
        spec.reg = self.regularizer.clone();
        if let Some(s) = o.patch_scale {
            spec.patch_scale = s;
        }
        if let Some(c) = &o.patch_color {
            spec.patch_color = c.clone();
        }
        if let Some(t) = o.success_threshold {
            spec.success_threshold = t;
        }
        spec.boxes = o.boxes.clone();
        Ok(spec)
    }

    /// Loads the image, starts the model and checks everything fits together.
    pub fn build_problem(&self) -> Result<Problem> {
        self.shape.canvas.validate()?;
        self.optimizer.validate()?;
        let mut spec = self.objective_spec()?;
        let image = match &self.objective.image {
            None => None,
            Some(ImageSource::Png(p)) => Some(NaturalImage::load_png(p)?),
            Some(ImageSource::Preset(name)) => {
                let (img, boxes) = scene_preset(name)?;
                if spec.boxes.is_empty() {
                    spec.boxes = boxes;
                }
                Some(img)
            }
        };
        if spec.mode == ObjectiveMode::Generate && image.is_some() {
            return Err(Error::Config("generate mode takes no input image".into()));
        }
        spec.validate()?;
        let problem = Problem {
            order: self.shape.order,
            raster: RasterSettings { canvas: self.shape.canvas.clone(), samples: self.samples() },
            spec,
            model: self.objective.model.instantiate()?,
            image,
        };
        problem.validate()?;
        Ok(problem)
    }
}
