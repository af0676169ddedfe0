//! End-to-end MAR inference: projection completion, optional residual
//! sinogram correction, FBP reconstruction.

use crate::ct::geometry::ScanGeometry;
use crate::ct::{fbp, FbpOptions, Image, Sinogram};
use crate::error::{Error, Result};
use crate::gan::bundle::ModelBundle;
use crate::gan::model::generator_apply;
use crate::gan::{compose_values, Composition};
use crate::mask::Mask;
use crate::tensor::Tensor;

/// Completed sinogram plus its reconstruction.
#[derive(Clone, Debug)]
pub struct MarOutput {
    pub completed: Sinogram,
    pub image: Image,
}

fn check_kind(bundle: &ModelBundle, expect: Composition, name: &str) -> Result<()> {
    if bundle.composition != expect {
        return Err(Error::usage(format!("{name} bundle was trained for a different stage")));
    }
    Ok(())
}

/// Apply one trained completion model to a raw sinogram. Only traced
/// positions are rewritten; everything else passes through bit-exact.
pub fn apply_completion(sino: &Sinogram, trace: &Mask, bundle: &ModelBundle) -> Result<Sinogram> {
    if trace.height != sino.n_views || trace.width != sino.n_detectors {
        return Err(Error::shape(
            "apply_completion",
            format!("trace {}x{} vs sinogram {}x{}", trace.height, trace.width, sino.n_views, sino.n_detectors),
        ));
    }
    if trace.is_empty() {
        return Ok(sino.clone());
    }

    let norm = bundle.norm;
    let masked: Vec<f64> = sino
        .values()
        .iter()
        .zip(trace.values())
        .map(|(&v, &m)| {
            match bundle.composition {
                // inpainting: masked-out content is hidden from the network
                Composition::Pc => {
                    if m == 1 {
                        0.0
                    } else {
                        norm.encode(v)
                    }
                }
                // residual correction sees the completed values as-is
                Composition::Sc => norm.encode(v),
            }
        })
        .collect();
    let x = Tensor::from_vec(vec![1, 1, sino.n_views, sino.n_detectors], masked)?;
    let gx = generator_apply(&x, &[trace], &bundle.g_cfg, &bundle.generator)?;
    let composed = compose_values(bundle.composition, x.data(), &trace.to_f64(), gx.data());

    let mut out = sino.clone();
    for (i, &m) in trace.values().iter().enumerate() {
        if m == 1 {
            out.values_mut()[i] = norm.decode(composed[i]);
        }
    }
    Ok(out)
}

/// Full MAR pipeline on one slice: PC completion per projection stack,
/// optional SC residual pass, then FBP. `metal_fill` re-inserts the metal
/// region into the reconstruction as a constant μ value.
#[allow(clippy::too_many_arguments)]
pub fn infer_mar(
    sino: &Sinogram,
    trace: &Mask,
    pc: &ModelBundle,
    sc: Option<&ModelBundle>,
    geom: &ScanGeometry,
    out_size: (usize, usize),
    pixel_size: f64,
    metal_fill: Option<(&Mask, f64)>,
) -> Result<MarOutput> {
    if sino.n_views != geom.n_views || sino.n_detectors != geom.n_detectors {
        return Err(Error::usage(format!(
            "sinogram {}x{} does not match geometry {}x{}",
            sino.n_views, sino.n_detectors, geom.n_views, geom.n_detectors
        )));
    }
    check_kind(pc, Composition::Pc, "pc")?;
    let mut completed = apply_completion(sino, trace, pc)?;
    if let Some(sc) = sc {
        check_kind(sc, Composition::Sc, "sc")?;
        completed = apply_completion(&completed, trace, sc)?;
    }
    let mut image = fbp(&completed, geom, out_size, pixel_size, FbpOptions::default())?;
    if let Some((metal_mask, fill)) = metal_fill {
        if metal_mask.width != image.width || metal_mask.height != image.height {
            return Err(Error::shape(
                "infer_mar",
                format!(
                    "metal mask {}x{} vs image {}x{}",
                    metal_mask.width, metal_mask.height, image.width, image.height
                ),
            ));
        }
        for (v, &m) in image.values_mut().iter_mut().zip(metal_mask.values()) {
            if m == 1 {
                *v = fill;
            }
        }
    }
    Ok(MarOutput { completed, image })
}
