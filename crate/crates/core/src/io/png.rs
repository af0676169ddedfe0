//! PNG export/import: 1-bit grayscale for binary masks, 8/16-bit grayscale
//! for images and sinograms with the display window recorded in a sidecar
//! text file next to the image.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format { path: path.to_path_buf(), msg: e.to_string() }
}

/// Write a binary mask as a 1-bit grayscale PNG (1 = white).
pub fn write_mask(path: &Path, width: usize, height: usize, values: &[u8]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::shape("write_mask", format!("{}x{} vs {} values", width, height, values.len())));
    }
    let row_bytes = width.div_ceil(8);
    let mut packed = vec![0u8; row_bytes * height];
    for y in 0..height {
        for x in 0..width {
            if values[y * width + x] != 0 {
                packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let mut bytes = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut bytes, width as u32, height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::One);
        let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
        writer.write_image_data(&packed).map_err(|e| png_err(path, e))?;
    }
    write_atomic(path, &bytes)
}

/// Read a grayscale PNG as a binary mask; any nonzero sample is 1.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| png_err(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(png_err(path, format!("expected grayscale mask, got {:?}", info.color_type)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut values = vec![0u8; w * h];
    match info.bit_depth {
        png::BitDepth::One => {
            let row_bytes = w.div_ceil(8);
            for y in 0..h {
                for x in 0..w {
                    let bit = buf[y * row_bytes + x / 8] >> (7 - x % 8) & 1;
                    values[y * w + x] = bit;
                }
            }
        }
        png::BitDepth::Eight => {
            for (dst, src) in values.iter_mut().zip(&buf[..w * h]) {
                *dst = (*src != 0) as u8;
            }
        }
        png::BitDepth::Sixteen => {
            for (dst, pair) in values.iter_mut().zip(buf.chunks_exact(2)) {
                *dst = (pair[0] != 0 || pair[1] != 0) as u8;
            }
        }
        other => return Err(png_err(path, format!("unsupported mask bit depth {:?}", other))),
    }
    Ok((w, h, values))
}

/// Bit depth for grayscale image export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrayDepth {
    Eight,
    Sixteen,
}

/// Write a real-valued image windowed to [lo, hi] as a grayscale PNG, plus
/// a `<name>.wl.txt` sidecar recording the window so values can be
/// interpreted later.
pub fn write_windowed(
    path: &Path,
    width: usize,
    height: usize,
    values: &[f64],
    (lo, hi): (f64, f64),
    depth: GrayDepth,
) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::shape("write_windowed", format!("{}x{} vs {} values", width, height, values.len())));
    }
    if !(hi > lo) {
        return Err(Error::usage(format!("window [{lo}, {hi}] is empty")));
    }
    let norm = |v: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);

    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        match depth {
            GrayDepth::Eight => {
                encoder.set_depth(png::BitDepth::Eight);
                let bytes: Vec<u8> = values.iter().map(|&v| (norm(v) * 255.0).round() as u8).collect();
                let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
                writer.write_image_data(&bytes).map_err(|e| png_err(path, e))?;
            }
            GrayDepth::Sixteen => {
                encoder.set_depth(png::BitDepth::Sixteen);
                let mut bytes = Vec::with_capacity(values.len() * 2);
                for &v in values {
                    bytes.extend_from_slice(&((norm(v) * 65535.0).round() as u16).to_be_bytes());
                }
                let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
                writer.write_image_data(&bytes).map_err(|e| png_err(path, e))?;
            }
        }
    }
    write_atomic(path, &out)?;

    let sidecar = path.with_extension("wl.txt");
    let center = 0.5 * (lo + hi);
    let width_wl = hi - lo;
    write_atomic(&sidecar, format!("window_center = {center}\nwindow_width = {width_wl}\nmin = {lo}\nmax = {hi}\n").as_bytes())?;
    Ok(())
}

/// Write an RGB image (used by the plot renderer and report panels).
pub fn write_rgb(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height * 3 {
        return Err(Error::shape("write_rgb", format!("{}x{}x3 vs {} bytes", width, height, pixels.len())));
    }
    let mut bytes = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut bytes, width as u32, height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
        writer.write_image_data(pixels).map_err(|e| png_err(path, e))?;
    }
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_roundtrip_one_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let (w, h) = (13, 5); // deliberately not byte-aligned
        let values: Vec<u8> = (0..w * h).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        write_mask(&path, w, h, &values).unwrap();
        let (rw, rh, back) = read_mask(&path).unwrap();
        assert_eq!((rw, rh), (w, h));
        assert_eq!(back, values);
    }

    #[test]
    fn windowed_export_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let values: Vec<f64> = (0..16).map(|i| i as f64 * 100.0).collect();
        write_windowed(&path, 4, 4, &values, (-1000.0, 1000.0), GrayDepth::Sixteen).unwrap();
        assert!(path.exists());
        let sidecar = std::fs::read_to_string(dir.path().join("img.wl.txt")).unwrap();
        assert!(sidecar.contains("window_width = 2000"));
    }
}
