//! Random blob masks: smoothed irregular polygons, rasterized and unioned.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::mask::{Mask, MaskDomain};

#[derive(Clone, Copy, Debug)]
pub struct BlobParams {
    /// Inclusive range for the number of blobs.
    pub n_blobs: (usize, usize),
    /// Base radius range in pixels.
    pub radius: (f64, f64),
    /// Radial jitter amplitude, 0 = circles, 1 = very ragged.
    pub irregularity: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams { n_blobs: (1, 3), radius: (3.0, 9.0), irregularity: 0.5 }
    }
}

fn point_in_polygon(x: f64, y: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn rasterize_polygon(mask: &mut Mask, poly: &[(f64, f64)]) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in poly {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let col_lo = x0.floor().max(0.0) as usize;
    let col_hi = (x1.ceil() as usize).min(mask.width.saturating_sub(1));
    let row_lo = y0.floor().max(0.0) as usize;
    let row_hi = (y1.ceil() as usize).min(mask.height.saturating_sub(1));
    for row in row_lo..=row_hi.min(mask.height - 1) {
        for col in col_lo..=col_hi {
            if point_in_polygon(col as f64, row as f64, poly) {
                mask.set(row, col, 1);
            }
        }
    }
}

/// Draw randomly shaped blobs; deterministic under the seed.
pub fn gen_blob_mask(width: usize, height: usize, params: &BlobParams, seed: u64) -> Result<Mask> {
    if params.n_blobs.0 > params.n_blobs.1 || params.radius.0 > params.radius.1 || params.radius.0 <= 0.0 {
        return Err(Error::config(format!("invalid blob params {:?}", params)));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut mask = Mask::empty(width, height, MaskDomain::Trace);
    let count = rng.random_range(params.n_blobs.0..=params.n_blobs.1);
    for _ in 0..count {
        let r = rng.random_range(params.radius.0..=params.radius.1);
        // keep centers inside so clipping stays mild
        let margin = r.min(width.min(height) as f64 / 2.0 - 1.0).max(0.0);
        let cx = rng.random_range(margin..=(width as f64 - 1.0 - margin).max(margin));
        let cy = rng.random_range(margin..=(height as f64 - 1.0 - margin).max(margin));

        let n_vertices = rng.random_range(8..=16);
        let mut radii: Vec<f64> = (0..n_vertices)
            .map(|_| r * (1.0 + params.irregularity * (rng.random::<f64>() - 0.5)))
            .collect();
        // circular moving average keeps the outline closed and smooth
        let raw = radii.clone();
        for i in 0..n_vertices {
            let prev = raw[(i + n_vertices - 1) % n_vertices];
            let next = raw[(i + 1) % n_vertices];
            radii[i] = (prev + raw[i] + next) / 3.0;
        }

        let poly: Vec<(f64, f64)> = radii
            .iter()
            .enumerate()
            .map(|(i, &ri)| {
                let angle = std::f64::consts::TAU * i as f64 / n_vertices as f64;
                (cx + ri * angle.cos(), cy + ri * angle.sin())
            })
            .collect();
        rasterize_polygon(&mut mask, &poly);
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_blobs_empty_mask() {
        let params = BlobParams { n_blobs: (0, 0), ..Default::default() };
        let mask = gen_blob_mask(64, 64, &params, 1).unwrap();
        assert!(mask.is_empty());
    }

    #[test]
    fn seed_determinism() {
        let params = BlobParams::default();
        let a = gen_blob_mask(64, 64, &params, 42).unwrap();
        let b = gen_blob_mask(64, 64, &params, 42).unwrap();
        assert_eq!(a, b);
        let c = gen_blob_mask(64, 64, &params, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mean_coverage_regression_bound() {
        // Monte-Carlo regression bound for the default generator
        let params = BlobParams::default();
        let samples = 10_000u64;
        let mut total = 0.0;
        for seed in 0..samples {
            total += gen_blob_mask(64, 64, &params, seed).unwrap().coverage_fraction();
        }
        let mean = total / samples as f64;
        assert!(
            (0.02..=0.25).contains(&mean),
            "mean blob coverage {mean} outside [2%, 25%]"
        );
    }
}
