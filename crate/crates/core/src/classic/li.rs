//! Sinogram completion by per-view linear interpolation across the trace.

use crate::ct::Sinogram;
use crate::error::{Error, Result};
use crate::mask::Mask;

/// Bookkeeping from a completion run.
#[derive(Clone, Debug, Default)]
pub struct LiReport {
    /// Views whose every detector was traced; filled from the nearest
    /// completable view instead.
    pub full_rows: Vec<usize>,
}

fn check_shapes(sino: &Sinogram, trace: &Mask) -> Result<()> {
    if trace.height != sino.n_views || trace.width != sino.n_detectors {
        return Err(Error::shape(
            "li_complete",
            format!(
                "trace {}x{} vs sinogram {}x{}",
                trace.height, trace.width, sino.n_views, sino.n_detectors
            ),
        ));
    }
    Ok(())
}

/// Interpolate one row in place. `traced` flags which entries to replace.
/// Untraced entries are never touched.
fn interpolate_row(row: &mut [f64], traced: &[u8]) {
    let n = row.len();
    let mut i = 0;
    while i < n {
        if traced[i] == 0 {
            i += 1;
            continue;
        }
        // maximal run [i, j)
        let mut j = i;
        while j < n && traced[j] == 1 {
            j += 1;
        }
        let left = if i > 0 { Some(row[i - 1]) } else { None };
        let right = if j < n { Some(row[j]) } else { None };
        match (left, right) {
            (Some(l), Some(r)) => {
                let span = (j - i + 1) as f64;
                for (k, slot) in row[i..j].iter_mut().enumerate() {
                    let w = (k + 1) as f64 / span;
                    *slot = l + (r - l) * w;
                }
            }
            // runs touching an edge extend the single anchor
            (Some(l), None) => row[i..j].fill(l),
            (None, Some(r)) => row[i..j].fill(r),
            (None, None) => unreachable!("fully traced rows are handled by the caller"),
        }
        i = j;
    }
}

/// Linear-interpolation completion with a report of degenerate views.
pub fn li_complete_report(sino: &Sinogram, trace: &Mask) -> Result<(Sinogram, LiReport)> {
    check_shapes(sino, trace)?;
    let n_det = sino.n_detectors;
    let mut out = sino.clone();
    let mut report = LiReport::default();

    let full: Vec<bool> = (0..sino.n_views)
        .map(|v| (0..n_det).all(|d| trace.get(v, d) == 1))
        .collect();

    for view in 0..sino.n_views {
        if full[view] {
            continue;
        }
        let traced: Vec<u8> = (0..n_det).map(|d| trace.get(view, d)).collect();
        interpolate_row(out.view_mut(view), &traced);
    }

    // fully traced views copy the nearest completed view
    for view in 0..sino.n_views {
        if !full[view] {
            continue;
        }
        report.full_rows.push(view);
        let nearest = (0..sino.n_views)
            .filter(|&v| !full[v])
            .min_by_key(|&v| (v as isize - view as isize).unsigned_abs());
        if let Some(src) = nearest {
            let copied = out.view(src).to_vec();
            out.view_mut(view).copy_from_slice(&copied);
        }
    }
    Ok((out, report))
}

/// Completion without the report.
pub fn li_complete(sino: &Sinogram, trace: &Mask) -> Result<Sinogram> {
    Ok(li_complete_report(sino, trace)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::MaskDomain;

    fn trace_of(rows: usize, cols: usize, ones: &[(usize, usize)]) -> Mask {
        let mut m = Mask::empty(cols, rows, MaskDomain::Trace);
        for &(r, c) in ones {
            m.set(r, c, 1);
        }
        m
    }

    #[test]
    fn empty_trace_is_identity() {
        let sino = Sinogram::new(2, 5, vec![1.0, 5.0, 2.0, 8.0, 3.0, 0.5, 0.25, 0.125, 4.0, 9.0]).unwrap();
        let out = li_complete(&sino, &trace_of(2, 5, &[])).unwrap();
        assert_eq!(out.values(), sino.values());
    }

    #[test]
    fn linear_rows_recovered_exactly() {
        let sino = Sinogram::new(1, 5, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let trace = trace_of(1, 5, &[(0, 1), (0, 2), (0, 3)]);
        let out = li_complete(&sino, &trace).unwrap();
        for (a, b) in out.values().iter().zip(sino.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_midpoints() {
        let sino = Sinogram::new(1, 5, vec![0.0, 99.0, 99.0, 99.0, 8.0]).unwrap();
        let trace = trace_of(1, 5, &[(0, 1), (0, 2), (0, 3)]);
        let out = li_complete(&sino, &trace).unwrap();
        assert_eq!(out.values(), &[0.0, 2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn edge_runs_extend_anchor() {
        let sino = Sinogram::new(1, 4, vec![99.0, 99.0, 3.0, 7.0]).unwrap();
        let trace = trace_of(1, 4, &[(0, 0), (0, 1)]);
        let out = li_complete(&sino, &trace).unwrap();
        assert_eq!(out.values(), &[3.0, 3.0, 3.0, 7.0]);
    }

    #[test]
    fn fully_traced_row_copies_nearest() {
        let sino = Sinogram::new(3, 3, vec![1.0, 2.0, 3.0, 9.0, 9.0, 9.0, 4.0, 5.0, 6.0]).unwrap();
        let trace = trace_of(3, 3, &[(1, 0), (1, 1), (1, 2)]);
        let (out, report) = li_complete_report(&sino, &trace).unwrap();
        assert_eq!(report.full_rows, vec![1]);
        assert_eq!(out.view(1), &[1.0, 2.0, 3.0]);
        assert_eq!(out.view(0), &[1.0, 2.0, 3.0]);
        assert_eq!(out.view(2), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn idempotent() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let values: Vec<f64> = (0..6 * 20).map(|_| rng.random::<f64>() * 10.0).collect();
        let sino = Sinogram::new(6, 20, values).unwrap();
        let mut trace = Mask::empty(20, 6, MaskDomain::Trace);
        for v in 0..6 {
            for d in 0..20 {
                if rng.random::<f64>() < 0.3 {
                    trace.set(v, d, 1);
                }
            }
        }
        let once = li_complete(&sino, &trace).unwrap();
        let twice = li_complete(&once, &trace).unwrap();
        assert_eq!(once.values(), twice.values());
    }
}
