//! Grid, image and polygon file formats.
//!
//! - 8-bit binary PGM (`P5`) and grayscale PNG for normalized masks,
//!   `round(255·v)` per pixel, row 0 first.
//! - `WNDR` raw float grids: 16-byte header (`b"WNDR"`, `u32` height,
//!   `u32` width, `u32` reserved, all little-endian) followed by `H·W`
//!   little-endian `f32` values in row-major order.
//! - SVG paths built from `M`/`L`/`Z` commands.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

pub const RAW_MAGIC: &[u8; 4] = b"WNDR";

fn to_byte(v: f64) -> u8 {
    (255.0 * v).round().clamp(0.0, 255.0) as u8
}

/// Quantizes a `[0, 1]` field to bytes.
pub fn grid_bytes(grid: &RasterGrid) -> Vec<u8> {
    grid.values.iter().map(|&v| to_byte(v)).collect()
}

pub fn encode_pgm(width: usize, height: usize, bytes: &[u8]) -> Vec<u8> {
    assert_eq!(bytes.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    out
}

/// Parses a binary `P5` PGM with maxval 255. Returns `(width, height, bytes)`.
pub fn decode_pgm(data: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Codec("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&data[start..pos]).unwrap_or("").to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Codec(format!("not a binary PGM (magic {:?})", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Codec(format!("bad PGM field {s:?}")));
    let (w, h, max) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if max != 255 {
        return Err(Error::Codec(format!("unsupported PGM maxval {max}")));
    }
    let body = data.get(pos..pos + w * h).ok_or_else(|| Error::Codec("truncated PGM body".into()))?;
    Ok((w, h, body.to_vec()))
}

pub fn write_pgm(path: &Path, grid: &RasterGrid) -> Result<()> {
    let data = encode_pgm(grid.width(), grid.height(), &grid_bytes(grid));
    std::fs::write(path, data).map_err(|e| Error::io(path, e))
}

pub fn encode_png_gray(width: usize, height: usize, bytes: &[u8]) -> Result<Vec<u8>> {
    encode_png(width, height, png::ColorType::Grayscale, bytes)
}

pub fn encode_png(width: usize, height: usize, color: png::ColorType, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Codec(e.to_string()))?;
        writer.write_image_data(bytes).map_err(|e| Error::Codec(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, grid: &RasterGrid) -> Result<()> {
    let data = encode_png_gray(grid.width(), grid.height(), &grid_bytes(grid))?;
    std::fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Decoded 8-bit PNG: `(width, height, channels, bytes)`; alpha is dropped.
pub fn decode_png(data: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(data);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Codec(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Codec(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let src_ch = info.color_type.samples();
    let buf = &buf[..info.buffer_size()];
    let (ch, bytes) = match src_ch {
        1 => (1, buf.to_vec()),
        2 => (1, buf.chunks_exact(2).map(|p| p[0]).collect()),
        3 => (3, buf.to_vec()),
        4 => (3, buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()),
        n => return Err(Error::Codec(format!("unsupported PNG channel count {n}"))),
    };
    Ok((w, h, ch, bytes))
}

/// Writes `values` as a `WNDR` blob of shape `height × width`.
pub fn write_raw_f32(mut out: impl Write, height: usize, width: usize, values: &[f64]) -> std::io::Result<()> {
    assert_eq!(values.len(), height * width);
    out.write_all(RAW_MAGIC)?;
    out.write_all(&(height as u32).to_le_bytes())?;
    out.write_all(&(width as u32).to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 4);
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

/// Reads a `WNDR` blob, returning `(height, width, values)`.
pub fn read_raw_f32(mut input: impl Read) -> Result<(usize, usize, Vec<f32>)> {
    let codec = |e: std::io::Error| Error::Codec(format!("raw grid: {e}"));
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(codec)?;
    if &header[..4] != RAW_MAGIC {
        return Err(Error::Codec(format!("raw grid: bad magic {:?}", &header[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
    let (h, w) = (word(4), word(8));
    let mut body = vec![0u8; h * w * 4];
    input.read_exact(&mut body).map_err(codec)?;
    let values = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((h, w, values))
}

pub fn save_raw_grid(path: &Path, grid: &RasterGrid) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_raw_f32(&mut out, grid.height(), grid.width(), &grid.values)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Closed SVG path (`M x y L ... Z`) for a polygon.
pub fn svg_path(polygon: &[[f64; 2]]) -> String {
    let mut d = String::new();
    for (i, p) in polygon.iter().enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{:.6} {:.6} ", p[0], p[1]);
    }
    d.push('Z');
    d
}

/// Standalone SVG document framing `polygon` in the given canvas window.
/// The y axis is flipped so that counter-clockwise contours render counter-clockwise.
pub fn svg_document(polygon: &[[f64; 2]], x_range: [f64; 2], y_range: [f64; 2]) -> String {
    let w = x_range[1] - x_range[0];
    let h = y_range[1] - y_range[0];
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"512\" height=\"512\">\n\
         <g transform=\"scale(1,-1)\">\n<path d=\"{}\" fill=\"black\" fill-rule=\"nonzero\"/>\n</g>\n</svg>\n",
        x_range[0],
        -y_range[1],
        w,
        h,
        svg_path(polygon)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::CanvasSpec;

    #[test]
    fn pgm_header_and_quantization() {
        let grid = RasterGrid::new(CanvasSpec::square(2), vec![0.0, 0.5, 1.0, 0.25]).unwrap();
        let data = encode_pgm(2, 2, &grid_bytes(&grid));
        assert!(data.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&data[data.len() - 4..], &[0, 128, 255, 64]);
        let (w, h, body) = decode_pgm(&data).unwrap();
        assert_eq!((w, h, body), (2, 2, vec![0, 128, 255, 64]));
    }

    #[test]
    fn png_roundtrip() {
        let bytes: Vec<u8> = (0..12).map(|i| i * 20).collect();
        let png = encode_png_gray(4, 3, &bytes).unwrap();
        let (w, h, ch, back) = decode_png(&png).unwrap();
        assert_eq!((w, h, ch), (4, 3, 1));
        assert_eq!(back, bytes);
    }

    #[test]
    fn raw_layout() {
        let mut buf = Vec::new();
        write_raw_f32(&mut buf, 1, 2, &[1.5, -2.0]).unwrap();
        assert_eq!(&buf[..4], b"WNDR");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &[0; 4]);
        assert_eq!(&buf[16..20], &1.5f32.to_le_bytes());
        assert_eq!(buf.len(), 24);
        let (h, w, v) = read_raw_f32(&buf[..]).unwrap();
        assert_eq!((h, w, v), (1, 2, vec![1.5, -2.0]));
        assert!(read_raw_f32(&b"WNDX\0\0\0\0\0\0\0\0\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn svg_commands() {
        let d = svg_path(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(d.starts_with("M0.000000 0.000000 L1.000000"));
        assert!(d.ends_with('Z'));
        assert_eq!(d.matches('L').count(), 2);
    }
}
