//! 2-D CT physics sandbox: phantoms, forward projection, filtered
//! back-projection, HU conversion, and metal-artifact synthesis.

pub mod fbp;
pub mod geometry;
pub mod phantom;
pub mod radon;
pub mod simulate;

pub use fbp::{fbp, fbp_report, FbpOptions, Filter};
pub use geometry::{Beam, ScanGeometry};
pub use phantom::{render_phantom, render_phantom_supersampled, Ellipse, MetalInsert, PhantomSpec};
pub use radon::radon;
pub use simulate::{metal_trace, simulate_metal_sinogram, EnergyBin, NoiseMode, Physics};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2-D attenuation map. Values are linear attenuation coefficients in
/// mm^-1 for physical phantoms, or HU after conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Pixel pitch in mm.
    pub pixel_size: f64,
    values: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixel_size: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape("image", format!("{}x{} vs {} values", width, height, values.len())));
        }
        Ok(Image { width, height, pixel_size, values })
    }

    pub fn zeros(width: usize, height: usize, pixel_size: f64) -> Self {
        Image { width, height, pixel_size, values: vec![0.0; width * height] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    /// Half-diagonal of the image footprint in mm.
    pub fn half_diagonal(&self) -> f64 {
        let w = self.width as f64 * self.pixel_size;
        let h = self.height as f64 * self.pixel_size;
        0.5 * (w * w + h * h).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixel_size: self.pixel_size,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(vec![self.height, self.width], self.values.clone()).expect("consistent")
    }
}

/// Stack of line integrals: rows are view angles, columns detector bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub n_views: usize,
    pub n_detectors: usize,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(n_views: usize, n_detectors: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_views * n_detectors {
            return Err(Error::shape(
                "sinogram",
                format!("{}x{} vs {} values", n_views, n_detectors, values.len()),
            ));
        }
        Ok(Sinogram { n_views, n_detectors, values })
    }

    pub fn zeros(n_views: usize, n_detectors: usize) -> Self {
        Sinogram { n_views, n_detectors, values: vec![0.0; n_views * n_detectors] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn view(&self, v: usize) -> &[f64] {
        &self.values[v * self.n_detectors..(v + 1) * self.n_detectors]
    }

    pub fn view_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.values[v * self.n_detectors..(v + 1) * self.n_detectors]
    }

    pub fn get(&self, view: usize, det: usize) -> f64 {
        self.values[view * self.n_detectors + det]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(vec![self.n_views, self.n_detectors], self.values.clone()).expect("consistent")
    }
}

/// HU = 1000 * (μ - μ_water) / μ_water.
pub fn mu_to_hu(image: &Image, mu_water: f64) -> Result<Image> {
    if !(mu_water > 0.0) {
        return Err(Error::usage(format!("mu_water must be positive, got {mu_water}")));
    }
    Ok(image.map(|mu| 1000.0 * (mu - mu_water) / mu_water))
}

/// Exact inverse of `mu_to_hu`.
pub fn hu_to_mu(image: &Image, mu_water: f64) -> Result<Image> {
    if !(mu_water > 0.0) {
        return Err(Error::usage(format!("mu_water must be positive, got {mu_water}")));
    }
    Ok(image.map(|hu| mu_water * (hu / 1000.0 + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hu_fixed_points() {
        let img = Image::new(2, 1, 1.0, vec![0.02, 0.0]).unwrap();
        let hu = mu_to_hu(&img, 0.02).unwrap();
        assert_eq!(hu.values(), &[0.0, -1000.0]);
    }

    #[test]
    fn hu_mu_inverse_pair() {
        let img = Image::new(4, 1, 1.0, vec![0.0, 0.013, 0.02, 0.41]).unwrap();
        let back = hu_to_mu(&mu_to_hu(&img, 0.019).unwrap(), 0.019).unwrap();
        for (a, b) in back.values().iter().zip(img.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
