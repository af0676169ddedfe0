use crate::error::{Error, Result};

/// Which space a mask lives in: CT image pixels, a single projection, or
/// the sinogram/trace domain (views x detectors).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskDomain {
    Image,
    Projection,
    Trace,
}

/// Binary mask; 1 marks metal / missing data.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub domain: MaskDomain,
    values: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, domain: MaskDomain, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape("mask", format!("{}x{} vs {} values", width, height, values.len())));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::usage("mask values must be strictly binary (0 or 1)"));
        }
        Ok(Mask { width, height, domain, values })
    }

    pub fn empty(width: usize, height: usize, domain: MaskDomain) -> Self {
        Mask { width, height, domain, values: vec![0; width * height] }
    }

    pub fn full(width: usize, height: usize, domain: MaskDomain) -> Self {
        Mask { width, height, domain, values: vec![1; width * height] }
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        debug_assert!(v <= 1);
        self.values[row * self.width + col] = v;
    }

    /// Number of set pixels; the "mask size" used for report binning.
    pub fn coverage(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    pub fn coverage_fraction(&self) -> f64 {
        self.coverage() as f64 / self.values.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Elementwise union with another mask of the same shape.
    pub fn union(&self, other: &Mask) -> Result<Mask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::shape("mask union", format!("{}x{} vs {}x{}", self.width, self.height, other.width, other.height)));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a | b).collect();
        Mask::new(self.width, self.height, self.domain, values)
    }

    /// Mask as 0.0/1.0 reals, for pooling and composition.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn from_f64(width: usize, height: usize, domain: MaskDomain, values: &[f64], threshold: f64) -> Result<Self> {
        let v = values.iter().map(|&x| (x >= threshold) as u8).collect();
        Mask::new(width, height, domain, v)
    }
}
