//! Filtered back-projection: Ram-Lak ramp filtering via FFT with optional
//! cosine apodization, parallel- and fan-beam backprojection.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::ct::geometry::{Beam, ScanGeometry};
use crate::ct::{Image, Sinogram};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Filter {
    #[default]
    RamLak,
    /// Ram-Lak with a cosine window; trades resolution for noise.
    RamLakCosine,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FbpOptions {
    pub filter: Filter,
}

/// Frequency response of the band-limited ramp, built from the sampled
/// real-space kernel so the DC term is handled correctly:
/// h[0] = 1/4, h[n] = -1/(pi^2 n^2) for odd n, 0 for even n (unit spacing).
fn ramp_response(pad_len: usize, filter: Filter) -> Vec<Complex<f64>> {
    let mut h = vec![Complex::new(0.0, 0.0); pad_len];
    h[0] = Complex::new(0.25, 0.0);
    let mut n = 1usize;
    while n <= pad_len / 2 {
        let v = -1.0 / (std::f64::consts::PI * n as f64).powi(2) * if n % 2 == 1 { 1.0 } else { 0.0 };
        if v != 0.0 {
            h[n] += Complex::new(v, 0.0);
            h[pad_len - n] += Complex::new(v, 0.0);
        }
        n += 2;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(pad_len).process(&mut h);
    if filter == Filter::RamLakCosine {
        for (k, slot) in h.iter_mut().enumerate() {
            let frac = k.min(pad_len - k) as f64 / (pad_len as f64 / 2.0);
            *slot *= (std::f64::consts::FRAC_PI_2 * frac).cos();
        }
    }
    h
}

/// Ramp-filter every view. Returns rows of length n_detectors in units
/// of filtered projection (already divided by detector spacing).
fn filter_views(sino: &Sinogram, spacing: f64, filter: Filter) -> Vec<f64> {
    let n_det = sino.n_detectors;
    let pad_len = (2 * n_det).next_power_of_two();
    let response = ramp_response(pad_len, filter);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(pad_len);
    let inv = planner.plan_fft_inverse(pad_len);
    let norm = 1.0 / (pad_len as f64 * spacing);

    let mut out = vec![0.0; sino.n_views * n_det];
    out.par_chunks_mut(n_det).enumerate().for_each(|(view, q_row)| {
        let mut buf: Vec<Complex<f64>> = sino
            .view(view)
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(pad_len)
            .collect();
        fwd.process(&mut buf);
        for (b, r) in buf.iter_mut().zip(&response) {
            *b *= r;
        }
        inv.process(&mut buf);
        for (slot, c) in q_row.iter_mut().zip(&buf[..n_det]) {
            *slot = c.re * norm;
        }
    });
    out
}

#[inline]
fn interp_row(row: &[f64], pos: f64) -> f64 {
    let i0 = pos.floor();
    let frac = pos - i0;
    let i0 = i0 as isize;
    let mut v = 0.0;
    if i0 >= 0 && (i0 as usize) < row.len() {
        v += (1.0 - frac) * row[i0 as usize];
    }
    let i1 = i0 + 1;
    if i1 >= 0 && (i1 as usize) < row.len() {
        v += frac * row[i1 as usize];
    }
    v
}

/// Reconstruct an image from a sinogram. Returns the image and a flag that
/// is true when the view count is too low for meaningful quality (< 8).
pub fn fbp_report(
    sino: &Sinogram,
    geom: &ScanGeometry,
    out_size: (usize, usize),
    pixel_size: f64,
    opts: FbpOptions,
) -> Result<(Image, bool)> {
    if sino.n_views != geom.n_views || sino.n_detectors != geom.n_detectors {
        return Err(Error::shape(
            "fbp",
            format!(
                "sinogram {}x{} vs geometry {}x{}",
                sino.n_views, sino.n_detectors, geom.n_views, geom.n_detectors
            ),
        ));
    }
    let (w, h) = out_size;
    geom.validate(0.5 * ((w * w + h * h) as f64).sqrt() * pixel_size)?;
    let degraded = geom.n_views < 8;

    let filtered = filter_views(sino, geom.detector_spacing, opts.filter);
    let n_det = geom.n_detectors;
    let det_center = (n_det as f64 - 1.0) / 2.0;
    let inv_spacing = 1.0 / geom.detector_spacing;
    // each direction is covered angular_range/pi times; normalize the sum
    // so it approximates the integral over [0, pi)
    let redundancy = (geom.angular_range / std::f64::consts::PI).max(1.0);
    let scale = geom.angular_range / geom.n_views as f64 / redundancy;
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;

    let trig: Vec<(f64, f64)> = (0..geom.n_views).map(|v| geom.view_angle(v).sin_cos()).collect();

    let mut values = vec![0.0; w * h];
    values.par_chunks_mut(w).enumerate().for_each(|(row, out_row)| {
        let y = (cy - row as f64) * pixel_size;
        for (col, slot) in out_row.iter_mut().enumerate() {
            let x = (col as f64 - cx) * pixel_size;
            let mut acc = 0.0;
            match geom.beam {
                Beam::Parallel => {
                    for (view, &(sin_t, cos_t)) in trig.iter().enumerate() {
                        let t = x * cos_t + y * sin_t;
                        let q = &filtered[view * n_det..(view + 1) * n_det];
                        acc += interp_row(q, t * inv_spacing + det_center);
                    }
                }
                Beam::Fan => {
                    let d_src = geom.source_to_center;
                    for (view, &(sin_t, cos_t)) in trig.iter().enumerate() {
                        // component along the central ray (source at -D*u)
                        let a = x * cos_t + y * sin_t + d_src;
                        let b = -x * sin_t + y * cos_t;
                        let t_star = d_src * b / a;
                        let weight = (d_src / a) * (d_src / a);
                        let q = &filtered[view * n_det..(view + 1) * n_det];
                        acc += weight * interp_row(q, t_star * inv_spacing + det_center);
                    }
                }
            }
            *slot = acc * scale;
        }
    });

    Ok((Image::new(w, h, pixel_size, values)?, degraded))
}

pub fn fbp(
    sino: &Sinogram,
    geom: &ScanGeometry,
    out_size: (usize, usize),
    pixel_size: f64,
    opts: FbpOptions,
) -> Result<Image> {
    // fan data are weighted before filtering; parallel passes through
    let weighted;
    let sino = match geom.beam {
        Beam::Parallel => sino,
        Beam::Fan => {
            let d = geom.source_to_center;
            let mut s = sino.clone();
            for view in 0..s.n_views {
                let row = s.view_mut(view);
                for (det, slot) in row.iter_mut().enumerate() {
                    let t = (det as f64 - (geom.n_detectors as f64 - 1.0) / 2.0) * geom.detector_spacing;
                    *slot *= d / (d * d + t * t).sqrt();
                }
            }
            weighted = s;
            &weighted
        }
    };
    Ok(fbp_report(sino, geom, out_size, pixel_size, opts)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::phantom::{render_phantom_supersampled, Ellipse, PhantomSpec};
    use crate::ct::radon::radon;

    fn soft_phantom() -> PhantomSpec {
        PhantomSpec {
            ellipses: vec![
                Ellipse { center: (0.0, 0.0), axes: (52.0, 44.0), rotation: 0.2, mu: 0.02 },
                Ellipse { center: (-14.0, 8.0), axes: (12.0, 9.0), rotation: -0.4, mu: 0.008 },
                Ellipse { center: (16.0, -10.0), axes: (9.0, 13.0), rotation: 0.9, mu: -0.006 },
                Ellipse { center: (6.0, 18.0), axes: (5.0, 5.0), rotation: 0.0, mu: 0.012 },
            ],
            metal: Vec::new(),
        }
    }

    #[test]
    fn zero_sinogram_zero_image() {
        let geom = ScanGeometry::parallel(32, 64, 1.0);
        let img = fbp(&Sinogram::zeros(32, 64), &geom, (32, 32), 1.0, FbpOptions::default()).unwrap();
        assert!(img.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_operator() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let geom = ScanGeometry::parallel(24, 48, 1.0);
        let v1: Vec<f64> = (0..24 * 48).map(|_| rng.random::<f64>()).collect();
        let v2: Vec<f64> = (0..24 * 48).map(|_| rng.random::<f64>()).collect();
        let (a, b) = (1.75, -0.5);
        let s1 = Sinogram::new(24, 48, v1.clone()).unwrap();
        let s2 = Sinogram::new(24, 48, v2.clone()).unwrap();
        let sm = Sinogram::new(24, 48, v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect()).unwrap();
        let opts = FbpOptions::default();
        let f1 = fbp(&s1, &geom, (32, 32), 1.0, opts).unwrap();
        let f2 = fbp(&s2, &geom, (32, 32), 1.0, opts).unwrap();
        let fm = fbp(&sm, &geom, (32, 32), 1.0, opts).unwrap();
        for i in 0..fm.values().len() {
            let expect = a * f1.values()[i] + b * f2.values()[i];
            assert!((fm.values()[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn degraded_flag_under_eight_views() {
        let geom = ScanGeometry::parallel(4, 32, 1.0);
        let (_, degraded) = fbp_report(&Sinogram::zeros(4, 32), &geom, (16, 16), 1.0, FbpOptions::default()).unwrap();
        assert!(degraded);
    }

    #[test]
    fn roundtrip_parallel_under_five_percent() {
        let phantom = render_phantom_supersampled(&soft_phantom(), 128, 128, 1.0, 4).unwrap();
        let geom = ScanGeometry::parallel(180, 192, 1.0);
        let sino = radon(&phantom, &geom).unwrap();
        let recon = fbp(&sino, &geom, (128, 128), 1.0, FbpOptions::default()).unwrap();

        let range = {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in phantom.values() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            hi - lo
        };
        let radius = 60.0f64;
        let (mut sq, mut count) = (0.0, 0usize);
        for row in 0..128 {
            for col in 0..128 {
                let x = col as f64 - 63.5;
                let y = 63.5 - row as f64;
                if x * x + y * y < radius * radius {
                    let d = recon.get(row, col) - phantom.get(row, col);
                    sq += d * d;
                    count += 1;
                }
            }
        }
        let rel_rmse = (sq / count as f64).sqrt() / range;
        assert!(rel_rmse < 0.05, "relative RMSE {rel_rmse}");
    }

    #[test]
    fn roundtrip_fan_reasonable() {
        let phantom = render_phantom_supersampled(&soft_phantom(), 128, 128, 1.0, 4).unwrap();
        let geom = ScanGeometry::fan(288, 256, 0.75, 300.0);
        let sino = radon(&phantom, &geom).unwrap();
        let recon = fbp(&sino, &geom, (128, 128), 1.0, FbpOptions::default()).unwrap();
        let range = 0.02;
        let radius = 58.0f64;
        let (mut sq, mut count) = (0.0, 0usize);
        for row in 0..128 {
            for col in 0..128 {
                let x = col as f64 - 63.5;
                let y = 63.5 - row as f64;
                if x * x + y * y < radius * radius {
                    let d = recon.get(row, col) - phantom.get(row, col);
                    sq += d * d;
                    count += 1;
                }
            }
        }
        let rel_rmse = (sq / count as f64).sqrt() / range;
        assert!(rel_rmse < 0.10, "fan relative RMSE {rel_rmse}");
    }
}
