//! Metal-artifact synthesis: reduced polychromatic Beer-Lambert model with
//! per-bin μ scales, Poisson photon statistics, and metal-trace extraction.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::ct::geometry::ScanGeometry;
use crate::ct::radon::radon;
use crate::ct::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::mask::{Mask, MaskDomain};
use crate::rng::derive_seed;

/// One spectral bin: its photon fraction and how strongly tissue and metal
/// attenuate relative to the reference (monochromatic) μ map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBin {
    pub fraction: f64,
    pub tissue_scale: f64,
    pub metal_scale: f64,
}

/// Reduced spectrum model. Two or three bins reproduce beam hardening and
/// photon starvation without a full spectral model.
#[derive(Clone, Debug, PartialEq)]
pub struct Physics {
    pub bins: Vec<EnergyBin>,
}

impl Physics {
    /// Monochromatic reference: simulation reduces to plain line integrals.
    pub fn single_bin() -> Self {
        Physics { bins: vec![EnergyBin { fraction: 1.0, tissue_scale: 1.0, metal_scale: 1.0 }] }
    }

    /// Default two-bin iron model: the soft bin sees metal ~4x harder.
    pub fn two_bin_iron() -> Self {
        Physics {
            bins: vec![
                EnergyBin { fraction: 0.45, tissue_scale: 1.15, metal_scale: 4.0 },
                EnergyBin { fraction: 0.55, tissue_scale: 0.88, metal_scale: 1.0 },
            ],
        }
    }

    fn validate(&self) -> Result<f64> {
        if self.bins.is_empty() {
            return Err(Error::config("physics needs at least one energy bin"));
        }
        let total: f64 = self.bins.iter().map(|b| b.fraction).sum();
        if !(total > 0.0) || self.bins.iter().any(|b| b.fraction <= 0.0) {
            return Err(Error::config("energy bin fractions must be positive"));
        }
        Ok(total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseMode {
    /// Infinite-photon limit: expected counts, no sampling, no clamping.
    Off,
    /// Poisson-sample detected counts; zero-count bins clamp to 1 count.
    Poisson { seed: u64 },
}

/// Simulate the corrupted sinogram of `image` whose metal pixels are marked
/// by `metal_mask`. Per-bin transmissions are summed, counts sampled at the
/// photon budget, and the result log-normalized back to line integrals.
pub fn simulate_metal_sinogram(
    image: &Image,
    metal_mask: &Mask,
    geom: &ScanGeometry,
    physics: &Physics,
    photons: f64,
    noise: NoiseMode,
) -> Result<Sinogram> {
    if metal_mask.width != image.width || metal_mask.height != image.height {
        return Err(Error::shape(
            "simulate_metal_sinogram",
            format!(
                "mask {}x{} vs image {}x{}",
                metal_mask.width, metal_mask.height, image.width, image.height
            ),
        ));
    }
    if !(photons > 0.0) {
        return Err(Error::usage(format!("photon count must be positive, got {photons}")));
    }
    let total_fraction = physics.validate()?;

    // split μ into tissue and metal parts; line integrals are additive
    let mask = metal_mask.values();
    let mut tissue = image.clone();
    let mut metal = Image::zeros(image.width, image.height, image.pixel_size);
    for (i, &m) in mask.iter().enumerate() {
        if m == 1 {
            metal.values_mut()[i] = image.values()[i];
            tissue.values_mut()[i] = 0.0;
        }
    }
    let line_tissue = radon(&tissue, geom)?;
    let line_metal = radon(&metal, geom)?;

    let n_det = geom.n_detectors;
    let mut out = Sinogram::zeros(geom.n_views, n_det);
    let views: Vec<(usize, &mut [f64])> = out.values_mut().chunks_mut(n_det).enumerate().collect();
    views.into_par_iter().try_for_each(|(view, row)| -> Result<()> {
        let mut rng = match noise {
            NoiseMode::Off => None,
            NoiseMode::Poisson { seed } => Some(ChaCha12Rng::seed_from_u64(derive_seed(seed, "poisson-view", view as u64))),
        };
        for det in 0..n_det {
            let lt = line_tissue.get(view, det);
            let lm = line_metal.get(view, det);
            let mut transmission = 0.0;
            for bin in &physics.bins {
                transmission += bin.fraction / total_fraction * (-(bin.tissue_scale * lt + bin.metal_scale * lm)).exp();
            }
            let value = match rng.as_mut() {
                None => -transmission.ln(),
                Some(rng) => {
                    let expected = photons * transmission;
                    let counts = if expected > 0.0 {
                        Poisson::new(expected)
                            .map_err(|e| Error::numeric(format!("poisson({expected}): {e}")))?
                            .sample(rng)
                    } else {
                        0.0
                    };
                    // photon starvation: clamp to one count before the log
                    -(counts.max(1.0) / photons).ln()
                }
            };
            if !value.is_finite() {
                return Err(Error::numeric(format!("non-finite line integral at view {view}, detector {det}")));
            }
            row[det] = value;
        }
        Ok(())
    })?;
    Ok(out)
}

/// Forward-project a binary image-domain mask and threshold: the trace is
/// every sinogram position whose ray touches metal. τ = 1e-6 x max with
/// ties included.
pub fn metal_trace(metal_mask: &Mask, geom: &ScanGeometry) -> Result<Mask> {
    let ones = Image::new(
        metal_mask.width,
        metal_mask.height,
        1.0,
        metal_mask.values().iter().map(|&v| v as f64).collect(),
    )?;
    let sino = radon(&ones, geom)?;
    let max = sino.max_value();
    if !(max > 0.0) {
        return Ok(Mask::empty(sino.n_detectors, sino.n_views, MaskDomain::Trace));
    }
    let tau = 1e-6 * max;
    let values = sino.values().iter().map(|&v| (v >= tau) as u8).collect();
    // trace mask: width = detectors, height = views (one row per view)
    Mask::new(sino.n_detectors, sino.n_views, MaskDomain::Trace, values)
}
