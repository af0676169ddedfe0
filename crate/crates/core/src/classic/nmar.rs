//! NMAR: normalize the sinogram by a forward-projected prior image,
//! interpolate the flattened trace, re-multiply.

use crate::classic::li::li_complete;
use crate::ct::geometry::ScanGeometry;
use crate::ct::radon::radon;
use crate::ct::{hu_to_mu, Image, Sinogram};
use crate::error::{Error, Result};
use crate::mask::Mask;

/// HU class boundaries for the piecewise-constant prior.
#[derive(Clone, Copy, Debug)]
pub struct SegmentationThresholds {
    /// Below this is air.
    pub air: f64,
    /// Above this is bone.
    pub bone: f64,
    /// Above this is metal.
    pub metal: f64,
}

impl Default for SegmentationThresholds {
    fn default() -> Self {
        SegmentationThresholds { air: -500.0, bone: 300.0, metal: 2500.0 }
    }
}

impl SegmentationThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.air < self.bone && self.bone < self.metal) {
            return Err(Error::config(format!(
                "thresholds must increase strictly: air {} < bone {} < metal {}",
                self.air, self.bone, self.metal
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant prior in HU: air -> -1000, soft tissue -> 0, bone
/// kept, metal replaced by soft tissue.
pub fn segment_prior(image_hu: &Image, th: &SegmentationThresholds) -> Result<Image> {
    th.validate()?;
    Ok(image_hu.map(|hu| {
        if hu > th.metal {
            0.0
        } else if hu > th.bone {
            hu
        } else if hu < th.air {
            -1000.0
        } else {
            0.0
        }
    }))
}

#[derive(Clone, Debug, Default)]
pub struct NmarReport {
    /// True when the prior projects to ~0 over most of the trace, which
    /// makes the normalization meaningless.
    pub degraded: bool,
}

/// Core NMAR update given an already-projected prior sinogram. Exposed for
/// oracle tests (homogeneity, perfect prior).
pub fn nmar_with_prior(sino: &Sinogram, trace: &Mask, s_prior: &Sinogram) -> Result<(Sinogram, NmarReport)> {
    if s_prior.n_views != sino.n_views || s_prior.n_detectors != sino.n_detectors {
        return Err(Error::shape(
            "nmar",
            format!(
                "prior sinogram {}x{} vs input {}x{}",
                s_prior.n_views, s_prior.n_detectors, sino.n_views, sino.n_detectors
            ),
        ));
    }
    if trace.height != sino.n_views || trace.width != sino.n_detectors {
        return Err(Error::shape(
            "nmar",
            format!("trace {}x{} vs sinogram {}x{}", trace.height, trace.width, sino.n_views, sino.n_detectors),
        ));
    }

    let max_prior = s_prior.max_value();
    let eps = 1e-6 * max_prior;
    let mut report = NmarReport::default();
    if !(eps > 0.0) {
        // prior projects to nothing anywhere; degrade to plain interpolation
        let out = li_complete(sino, trace)?;
        report.degraded = true;
        return Ok((out, report));
    }

    let normalized_values: Vec<f64> = sino
        .values()
        .iter()
        .zip(s_prior.values())
        .map(|(&v, &p)| v / p.max(eps))
        .collect();
    let normalized = Sinogram::new(sino.n_views, sino.n_detectors, normalized_values)?;
    let completed_norm = li_complete(&normalized, trace)?;

    // write only traced positions so the rest stays bit-identical
    let mut out = sino.clone();
    let (mut traced, mut starved) = (0usize, 0usize);
    for view in 0..sino.n_views {
        for det in 0..sino.n_detectors {
            if trace.get(view, det) == 1 {
                traced += 1;
                let p = s_prior.get(view, det);
                if p <= eps {
                    starved += 1;
                }
                out.view_mut(view)[det] = completed_norm.get(view, det) * p;
            }
        }
    }
    report.degraded = traced > 0 && starved * 2 > traced;
    Ok((out, report))
}

/// Full NMAR: segment a prior from the uncorrected reconstruction, project
/// it, and run the normalized interpolation. `mu_water` converts the prior
/// back to attenuation for projection.
pub fn nmar_complete(
    sino: &Sinogram,
    trace: &Mask,
    uncorrected_recon_hu: &Image,
    th: &SegmentationThresholds,
    geom: &ScanGeometry,
    mu_water: f64,
) -> Result<(Sinogram, NmarReport)> {
    let prior_hu = segment_prior(uncorrected_recon_hu, th)?;
    let prior_mu = hu_to_mu(&prior_hu, mu_water)?;
    // clamp tiny negatives from the HU rounding of air
    let prior_mu = prior_mu.map(|v| v.max(0.0));
    let s_prior = radon(&prior_mu, geom)?;
    nmar_with_prior(sino, trace, &s_prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::phantom::{render_phantom_supersampled, Ellipse, PhantomSpec};
    use crate::ct::mu_to_hu;
    use crate::mask::MaskDomain;

    #[test]
    fn segment_prior_classes() {
        let img = Image::new(5, 1, 1.0, vec![0.0, -800.0, 500.0, 3000.0, 100.0]).unwrap();
        let prior = segment_prior(&img, &SegmentationThresholds::default()).unwrap();
        assert_eq!(prior.values(), &[0.0, -1000.0, 500.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_images_map_to_constants() {
        let th = SegmentationThresholds::default();
        let water = Image::new(4, 4, 1.0, vec![0.0; 16]).unwrap();
        assert!(segment_prior(&water, &th).unwrap().values().iter().all(|&v| v == 0.0));
        let air = Image::new(4, 4, 1.0, vec![-1000.0; 16]).unwrap();
        assert!(segment_prior(&air, &th).unwrap().values().iter().all(|&v| v == -1000.0));
    }

    #[test]
    fn thresholds_must_increase() {
        let th = SegmentationThresholds { air: 100.0, bone: 50.0, metal: 2500.0 };
        assert!(th.validate().is_err());
    }

    #[test]
    fn empty_trace_identity() {
        let sino = Sinogram::new(2, 4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let prior = Sinogram::new(2, 4, vec![1.0; 8]).unwrap();
        let trace = Mask::empty(4, 2, MaskDomain::Trace);
        let (out, _) = nmar_with_prior(&sino, &trace, &prior).unwrap();
        assert_eq!(out.values(), sino.values());
    }

    #[test]
    fn perfect_prior_recovers_prior_projection() {
        // a water disk rasterized at pixel centers equals its own
        // segmentation prior exactly
        let mu_water = 0.02;
        let spec = PhantomSpec {
            ellipses: vec![Ellipse { center: (0.0, 0.0), axes: (22.0, 16.0), rotation: 0.3, mu: mu_water }],
            metal: Vec::new(),
        };
        let img = render_phantom_supersampled(&spec, 64, 64, 1.0, 1).unwrap();
        let geom = ScanGeometry::parallel(48, 96, 1.0);
        let sino = radon(&img, &geom).unwrap();
        let recon_hu = mu_to_hu(&img, mu_water).unwrap();

        let mut trace = Mask::empty(96, 48, MaskDomain::Trace);
        for view in 0..48 {
            for det in 40..56 {
                trace.set(view, det, 1);
            }
        }
        let (out, report) = nmar_complete(&sino, &trace, &recon_hu, &SegmentationThresholds::default(), &geom, mu_water).unwrap();
        assert!(!report.degraded);

        let s_prior = radon(&img, &geom).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for view in 0..48 {
            for det in 0..96 {
                if trace.get(view, det) == 1 {
                    let d = out.get(view, det) - s_prior.get(view, det);
                    num += d * d;
                    den += s_prior.get(view, det) * s_prior.get(view, det);
                }
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-6, "perfect-prior relative error {rel}");
    }

    #[test]
    fn joint_scaling_homogeneity() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        let values: Vec<f64> = (0..4 * 16).map(|_| rng.random::<f64>() + 0.5).collect();
        let prior_values: Vec<f64> = (0..4 * 16).map(|_| rng.random::<f64>() + 0.5).collect();
        let sino = Sinogram::new(4, 16, values.clone()).unwrap();
        let prior = Sinogram::new(4, 16, prior_values.clone()).unwrap();
        let mut trace = Mask::empty(16, 4, MaskDomain::Trace);
        for view in 0..4 {
            for det in 5..9 {
                trace.set(view, det, 1);
            }
        }
        let c = 3.5;
        let (base, _) = nmar_with_prior(&sino, &trace, &prior).unwrap();
        let sino_c = Sinogram::new(4, 16, values.iter().map(|v| c * v).collect()).unwrap();
        let prior_c = Sinogram::new(4, 16, prior_values.iter().map(|v| c * v).collect()).unwrap();
        let (scaled, _) = nmar_with_prior(&sino_c, &trace, &prior_c).unwrap();
        for (a, b) in scaled.values().iter().zip(base.values()) {
            assert!((a - c * b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn degraded_when_prior_starved_inside_trace() {
        // prior is zero over the traced region: >50% starved
        let sino = Sinogram::new(1, 8, vec![1.0; 8]).unwrap();
        let mut prior_values = vec![1.0; 8];
        for v in prior_values.iter_mut().take(6).skip(2) {
            *v = 0.0;
        }
        let prior = Sinogram::new(1, 8, prior_values).unwrap();
        let mut trace = Mask::empty(8, 1, MaskDomain::Trace);
        for det in 2..6 {
            trace.set(0, det, 1);
        }
        let (_, report) = nmar_with_prior(&sino, &trace, &prior).unwrap();
        assert!(report.degraded);
    }
}
