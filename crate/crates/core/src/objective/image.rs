//! Images, mask compositing and patch rendering, each with its adjoint.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export;
use crate::raster::RasterGrid;

/// `height × width × channels` image in `[0, 1]`, stored row-major with
/// interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl NaturalImage {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!("images have 1 or 3 channels, got {channels}")));
        }
        if values.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "{} values for a {height}x{width}x{channels} image",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![value; height * width * channels],
        }
    }

    /// Single-channel image from a normalized mask.
    pub fn from_mask(mask: &RasterGrid) -> Self {
        Self {
            height: mask.height(),
            width: mask.width(),
            channels: 1,
            values: mask.values.clone(),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (w, h, ch, bytes) = export::decode_png(&data)?;
        Ok(Self {
            height: h,
            width: w,
            channels: ch,
            values: bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| (255.0 * v).round().clamp(0.0, 255.0) as u8)
            .collect();
        let color = if self.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb };
        export::encode_png(self.width, self.height, color, &bytes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default)]
    pub label: String,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h, label: String::new() }
    }

    /// Intersects the box with `[0, width] × [0, height]`, re-centring it.
    pub fn clamped(&self, width: usize, height: usize) -> Result<BoundingBox> {
        let x0 = (self.cx - self.w / 2.0).max(0.0);
        let x1 = (self.cx + self.w / 2.0).min(width as f64);
        let y0 = (self.cy - self.h / 2.0).max(0.0);
        let y1 = (self.cy + self.h / 2.0).min(height as f64);
        if !(self.w > 0.0 && self.h > 0.0) || x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidInput(format!(
                "box {:?} (cx={}, cy={}, w={}, h={}) lies outside the {width}x{height} image",
                self.label, self.cx, self.cy, self.w, self.h
            )));
        }
        Ok(BoundingBox {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
            label: self.label.clone(),
        })
    }

    /// Pixel index ranges `(cols, rows)` whose centres fall inside the box.
    pub fn pixel_span(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let span = |c: f64, e: f64| {
            let lo = (c - e / 2.0 - 0.5).ceil().max(0.0) as usize;
            let hi = (c + e / 2.0 - 0.5).ceil().max(0.0) as usize;
            lo..hi
        };
        (span(self.cx, self.w), span(self.cy, self.h))
    }
}

fn check_mask_shape(x: &NaturalImage, mask: &RasterGrid) -> Result<()> {
    if mask.height() != x.height || mask.width() != x.width {
        return Err(Error::InvalidInput(format!(
            "mask {}x{} does not match image {}x{}",
            mask.height(),
            mask.width(),
            x.height,
            x.width
        )));
    }
    Ok(())
}

/// `x ⊙ mask`, the mask broadcast across channels.
pub fn composite_mask(x: &NaturalImage, mask: &RasterGrid) -> Result<NaturalImage> {
    check_mask_shape(x, mask)?;
    let ch = x.channels;
    let values = x
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * mask.values[i / ch])
        .collect();
    Ok(NaturalImage { values, ..x.clone() })
}

/// Adjoint of [`composite_mask`] with respect to the mask: `Σ_channels x ⊙ upstream`.
pub fn composite_mask_adjoint(x: &NaturalImage, upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != x.values.len() {
        return Err(Error::InvalidInput(format!(
            "upstream of {} values for image of {}",
            upstream.len(),
            x.values.len()
        )));
    }
    Ok(x.values
        .chunks_exact(x.channels)
        .zip(upstream.chunks_exact(x.channels))
        .map(|(px, up)| px.iter().zip(up).map(|(a, b)| a * b).sum())
        .collect())
}

/// One image pixel touched by a patch and the mask taps that produced its alpha.
#[derive(Clone, Debug)]
struct StampPixel {
    pixel: usize,
    alpha: f64,
    taps: [(usize, f64); 4],
    /// Pixel values before this stamp was applied.
    before: Vec<f64>,
}

/// Rendered patch image plus what the adjoint needs.
#[derive(Clone, Debug)]
pub struct PatchRender {
    pub image: NaturalImage,
    pub color: Vec<f64>,
    mask_len: usize,
    stamps: Vec<Vec<StampPixel>>,
    /// Footprints actually rendered, in pixel coordinates.
    pub footprints: Vec<BoundingBox>,
}

impl PatchRender {
    /// Number of image pixels written by each stamp.
    pub fn footprint_pixels(&self) -> Vec<usize> {
        self.stamps.iter().map(Vec::len).collect()
    }

    /// Gradient with respect to the mask values given `∂L/∂out`.
    pub fn backward(&self, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.image.values.len() {
            return Err(Error::InvalidInput(format!(
                "upstream of {} values for image of {}",
                upstream.len(),
                self.image.values.len()
            )));
        }
        let ch = self.image.channels;
        let mut up = upstream.to_vec();
        let mut grad = vec![0.0; self.mask_len];
        for stamp in self.stamps.iter().rev() {
            for px in stamp {
                let base = px.pixel * ch;
                let mut d_alpha = 0.0;
                for c in 0..ch {
                    d_alpha += up[base + c] * (self.color[c] - px.before[c]);
                    up[base + c] *= 1.0 - px.alpha;
                }
                for &(idx, w) in &px.taps {
                    grad[idx] += d_alpha * w;
                }
            }
        }
        Ok(grad)
    }
}

/// Bilinear taps for continuous mask coordinates, clamped to the grid.
fn bilinear_taps(mask: &RasterGrid, u: f64, v: f64) -> [(usize, f64); 4] {
    let (w, h) = (mask.width(), mask.height());
    let fx = (u * w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
    let fy = (v * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    [
        (y0 * w + x0, (1.0 - tx) * (1.0 - ty)),
        (y0 * w + x1, tx * (1.0 - ty)),
        (y1 * w + x0, (1.0 - tx) * ty),
        (y1 * w + x1, tx * ty),
    ]
}

/// Alpha-composites the mask, scaled to `patch_scale` of each box and centred
/// on it, in a solid `color` over `x`. Pixels outside every footprint are
/// copied unchanged.
pub fn render_patch(
    x: &NaturalImage,
    mask: &RasterGrid,
    boxes: &[BoundingBox],
    patch_scale: f64,
    color: &[f64],
) -> Result<PatchRender> {
    if boxes.is_empty() {
        return Err(Error::InvalidInput("patch rendering needs at least one box".into()));
    }
    if !(patch_scale > 0.0 && patch_scale <= 1.0) {
        return Err(Error::Config(format!("patch_scale must lie in (0, 1], got {patch_scale}")));
    }
    if color.len() != x.channels {
        return Err(Error::InvalidInput(format!(
            "patch colour has {} channels, image has {}",
            color.len(),
            x.channels
        )));
    }
    let ch = x.channels;
    let mut image = x.clone();
    let mut stamps = Vec::with_capacity(boxes.len());
    let mut footprints = Vec::with_capacity(boxes.len());
    for b in boxes {
        let b = b.clamped(x.width, x.height)?;
        let foot = BoundingBox {
            cx: b.cx,
            cy: b.cy,
            w: patch_scale * b.w,
            h: patch_scale * b.h,
            label: b.label.clone(),
        };
        let (x_lo, y_lo) = (foot.cx - foot.w / 2.0, foot.cy - foot.h / 2.0);
        let (cols, rows) = foot.pixel_span();
        let mut stamp = Vec::with_capacity(cols.len() * rows.len());
        for row in rows.clone() {
            let v = (row as f64 + 0.5 - y_lo) / foot.h;
            for col in cols.clone() {
                let u = (col as f64 + 0.5 - x_lo) / foot.w;
                let taps = bilinear_taps(mask, u, v);
                let alpha: f64 = taps.iter().map(|&(i, w)| w * mask.values[i]).sum();
                let pixel = row * x.width + col;
                let base = pixel * ch;
                let before = image.values[base..base + ch].to_vec();
                for c in 0..ch {
                    image.values[base + c] = before[c] * (1.0 - alpha) + color[c] * alpha;
                }
                stamp.push(StampPixel { pixel, alpha, taps, before });
            }
        }
        stamps.push(stamp);
        footprints.push(foot);
    }
    Ok(PatchRender {
        image,
        color: color.to_vec(),
        mask_len: mask.values.len(),
        stamps,
        footprints,
    })
}
