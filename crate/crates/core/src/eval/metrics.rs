//! RMSE and SSIM.

use crate::ct::Image;
use crate::error::{Error, Result};
use crate::mask::Mask;

/// Root-mean-square error over an optional inclusion region (1 = counted).
/// The harness passes the complement of the metal mask so the re-inserted
/// constant never contributes.
pub fn rmse(a: &Image, b: &Image, region: Option<&Mask>) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::shape("rmse", format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    match region {
        None => {
            for (x, y) in a.values().iter().zip(b.values()) {
                let d = x - y;
                sq += d * d;
            }
            count = a.values().len();
        }
        Some(mask) => {
            if mask.width != a.width || mask.height != a.height {
                return Err(Error::shape(
                    "rmse",
                    format!("region {}x{} vs image {}x{}", mask.width, mask.height, a.width, a.height),
                ));
            }
            for ((x, y), &m) in a.values().iter().zip(b.values()).zip(mask.values()) {
                if m == 1 {
                    let d = x - y;
                    sq += d * d;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::usage("rmse over an empty region"));
    }
    Ok((sq / count as f64).sqrt())
}

/// RMSE between sinogram-domain arrays restricted to the trace.
pub fn trace_rmse(a: &crate::ct::Sinogram, b: &crate::ct::Sinogram, trace: &Mask) -> Result<f64> {
    if a.n_views != b.n_views || a.n_detectors != b.n_detectors {
        return Err(Error::shape("trace_rmse", "sinogram shapes differ".to_string()));
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    for ((x, y), &m) in a.values().iter().zip(b.values()).zip(trace.values()) {
        if m == 1 {
            let d = x - y;
            sq += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::usage("trace_rmse over an empty trace"));
    }
    Ok((sq / count as f64).sqrt())
}

#[derive(Clone, Copy, Debug)]
pub struct SsimParams {
    /// Window side length; must be odd.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Fixed dynamic range so scores compare across cases (HU display window).
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, dynamic_range: 2000.0 }
    }
}

/// Mean local SSIM with a Gaussian window, evaluated wherever the full
/// window fits.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::shape("ssim", format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    if params.window % 2 == 0 || params.window == 0 {
        return Err(Error::usage(format!("SSIM window must be odd, got {}", params.window)));
    }
    if a.width < params.window || a.height < params.window {
        return Err(Error::usage(format!(
            "image {}x{} smaller than SSIM window {}",
            a.width, a.height, params.window
        )));
    }

    let w = params.window;
    let half = w / 2;
    let mut kernel = vec![0.0; w * w];
    let mut total = 0.0;
    for i in 0..w {
        for j in 0..w {
            let dy = i as f64 - half as f64;
            let dx = j as f64 - half as f64;
            let g = (-(dx * dx + dy * dy) / (2.0 * params.sigma * params.sigma)).exp();
            kernel[i * w + j] = g;
            total += g;
        }
    }
    for k in kernel.iter_mut() {
        *k /= total;
    }

    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let (width, height) = (a.width, a.height);
    let mut acc = 0.0;
    let mut count = 0usize;
    for row in half..height - half {
        for col in half..width - half {
            let (mut mu_x, mut mu_y) = (0.0, 0.0);
            let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
            for i in 0..w {
                for j in 0..w {
                    let k = kernel[i * w + j];
                    let x = a.get(row + i - half, col + j - half);
                    let y = b.get(row + i - half, col + j - half);
                    mu_x += k * x;
                    mu_y += k * y;
                    xx += k * x * x;
                    yy += k * y * y;
                    xy += k * x * y;
                }
            }
            let var_x = xx - mu_x * mu_x;
            let var_y = yy - mu_y * mu_y;
            let cov = xy - mu_x * mu_y;
            let local = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
            acc += local;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::MaskDomain;

    fn gradient_image(size: usize) -> Image {
        let values: Vec<f64> = (0..size * size)
            .map(|i| ((i / size) as f64 * 13.0 + (i % size) as f64 * 7.0) % 400.0)
            .collect();
        Image::new(size, size, 1.0, values).unwrap()
    }

    #[test]
    fn rmse_identity_and_offset() {
        let img = gradient_image(16);
        assert_eq!(rmse(&img, &img, None).unwrap(), 0.0);
        let shifted = img.map(|v| v + 10.0);
        assert!((rmse(&img, &shifted, None).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_region_excludes_pixels() {
        let a = gradient_image(8);
        let mut b = a.clone();
        b.set(3, 3, a.get(3, 3) + 1000.0);
        let mut region = Mask::full(8, 8, MaskDomain::Image);
        region.set(3, 3, 0);
        assert_eq!(rmse(&a, &b, Some(&region)).unwrap(), 0.0);
        let empty = Mask::empty(8, 8, MaskDomain::Image);
        assert!(rmse(&a, &b, Some(&empty)).is_err());
    }

    #[test]
    fn ssim_self_is_one() {
        let img = gradient_image(32);
        let s = ssim(&img, &img, &SsimParams::default()).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "ssim(x,x) = {s}");
    }

    #[test]
    fn ssim_orders_structural_damage() {
        let img = gradient_image(32);
        let inverted = img.map(|v| -v + 200.0);
        let s_self = ssim(&img, &img, &SsimParams::default()).unwrap();
        let s_inv = ssim(&img, &inverted, &SsimParams::default()).unwrap();
        assert!(s_inv < s_self);
    }

    #[test]
    fn ssim_constant_pair_is_one() {
        let a = Image::new(16, 16, 1.0, vec![100.0; 256]).unwrap();
        let s = ssim(&a, &a.clone(), &SsimParams::default()).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_even_window() {
        let img = gradient_image(16);
        let bad = SsimParams { window: 8, ..SsimParams::default() };
        assert!(ssim(&img, &img, &bad).is_err());
    }

    #[test]
    fn ssim_bounded() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(6);
        for _ in 0..5 {
            let a = Image::new(16, 16, 1.0, (0..256).map(|_| rng.random::<f64>() * 2000.0 - 1000.0).collect()).unwrap();
            let b = Image::new(16, 16, 1.0, (0..256).map(|_| rng.random::<f64>() * 2000.0 - 1000.0).collect()).unwrap();
            let s = ssim(&a, &b, &SsimParams::default()).unwrap();
            assert!((-1.0..=1.0).contains(&s), "ssim {s} out of range");
        }
    }
}
