//! Minimal line-plot rasterizer. White canvas, black axes, one colored
//! polyline per series, 5x7 bitmap labels. No external plotting service.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::png::write_rgb;

const GLYPH_W: usize = 5;

// 5x7 glyphs, one byte per row, low 5 bits used (MSB = leftmost).
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        ' ' => [0; 7],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F], // box for unknowns
    }
}

pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Canvas { width, height, pixels: vec![255; width * height * 3] }
    }

    pub fn set(&mut self, x: isize, y: isize, rgb: (u8, u8, u8)) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.pixels[i] = rgb.0;
        self.pixels[i + 1] = rgb.1;
        self.pixels[i + 2] = rgb.2;
    }

    pub fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), rgb: (u8, u8, u8)) {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = x0 + (x1 - x0) * t;
            let y = y0 + (y1 - y0) * t;
            self.set(x.round() as isize, y.round() as isize, rgb);
        }
    }

    pub fn text(&mut self, x: isize, y: isize, text: &str, rgb: (u8, u8, u8)) {
        let mut cx = x;
        for c in text.chars() {
            let rows = glyph(c);
            for (gy, row) in rows.iter().enumerate() {
                for gx in 0..GLYPH_W {
                    if row >> (GLYPH_W - 1 - gx) & 1 == 1 {
                        self.set(cx + gx as isize, y + gy as isize, rgb);
                    }
                }
            }
            cx += GLYPH_W as isize + 1;
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_rgb(path, self.width, self.height, &self.pixels)
    }
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: (u8, u8, u8),
}

pub const PALETTE: [(u8, u8, u8); 6] = [
    (60, 60, 60),
    (214, 69, 65),
    (31, 119, 180),
    (44, 160, 44),
    (148, 103, 189),
    (255, 127, 14),
];

fn nice_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Render series into a labeled line plot.
pub fn line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::usage("nothing to plot"));
    }
    let (width, height) = (640usize, 480usize);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let mut canvas = Canvas::new(width, height);

    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let pad = (y1 - y0) * 0.06;
    let (y0, y1) = (y0 - pad, y1 + pad);

    let plot_w = width as f64 - left - right;
    let plot_h = height as f64 - top - bottom;
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        (
            left + (x - x0) / (x1 - x0) * plot_w,
            top + (1.0 - (y - y0) / (y1 - y0)) * plot_h,
        )
    };

    let black = (0, 0, 0);
    canvas.line(to_px(x0, y0), to_px(x1, y0), black);
    canvas.line(to_px(x0, y0), to_px(x0, y1), black);
    for i in 0..=4 {
        let xv = x0 + (x1 - x0) * i as f64 / 4.0;
        let yv = y0 + (y1 - y0) * i as f64 / 4.0;
        let (tx, ty) = to_px(xv, y0);
        canvas.line((tx, ty), (tx, ty + 4.0), black);
        canvas.text(tx as isize - 12, ty as isize + 8, &nice_label(xv), black);
        let (lx, ly) = to_px(x0, yv);
        canvas.line((lx - 4.0, ly), (lx, ly), black);
        canvas.text(4, ly as isize - 3, &nice_label(yv), black);
    }
    canvas.text(left as isize, 14, title, black);
    canvas.text((width as f64 - right) as isize - 6 * x_label.len() as isize, (height - 14) as isize, x_label, black);
    canvas.text(4, (top - 14.0) as isize, y_label, black);

    for (i, s) in series.iter().enumerate() {
        for pair in s.points.windows(2) {
            canvas.line(to_px(pair[0].0, pair[0].1), to_px(pair[1].0, pair[1].1), s.color);
        }
        // point markers
        for &(x, y) in &s.points {
            let (px, py) = to_px(x, y);
            for dx in -1..=1isize {
                for dy in -1..=1isize {
                    canvas.set(px as isize + dx, py as isize + dy, s.color);
                }
            }
        }
        let ly = top as isize + 12 * i as isize;
        let lx = (width as f64 - right) as isize - 90;
        canvas.line((lx as f64 - 18.0, ly as f64 + 3.0), (lx as f64 - 4.0, ly as f64 + 3.0), s.color);
        canvas.text(lx, ly, &s.label, black);
    }
    canvas.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_a_plot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.png");
        let series = vec![
            Series {
                label: "LI".to_string(),
                points: vec![(100.0, 80.0), (350.0, 95.0), (750.0, 130.0)],
                color: PALETTE[1],
            },
            Series {
                label: "PC".to_string(),
                points: vec![(100.0, 40.0), (350.0, 42.0), (750.0, 60.0)],
                color: PALETTE[2],
            },
        ];
        line_plot(&path, "RMSE VS MASK SIZE", "PIXELS", "HU", &series).unwrap();
        assert!(path.metadata().unwrap().len() > 500);
    }
}
