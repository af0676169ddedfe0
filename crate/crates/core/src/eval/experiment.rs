//! Experiment orchestration: run every method over the held-out cases,
//! bin by mask size, and emit CSVs, plots, and qualitative panels.

use std::path::Path;

use rayon::prelude::*;

use crate::classic::{li_complete, nmar_complete, SegmentationThresholds};
use crate::ct::{fbp, mu_to_hu, FbpOptions, Image, Sinogram};
use crate::error::{Error, Result};
use crate::eval::dataset::{Dataset, ExperimentConfig, Method, TestCase};
use crate::eval::metrics::{rmse, ssim, trace_rmse, SsimParams};
use crate::eval::plot::{line_plot, Series, PALETTE};
use crate::gan::{apply_completion, ModelBundle};
use crate::io::png::{write_windowed, GrayDepth};
use crate::io::write_atomic;
use crate::mask::{Mask, MaskDomain};

/// One evaluated (case, method) pair.
#[derive(Clone, Debug)]
pub struct MetricRow {
    pub case_id: usize,
    pub method: Method,
    pub mask_size: usize,
    pub rmse_hu: f64,
    pub ssim: f64,
    /// Completion error inside the trace, in line-integral units.
    pub trace_rmse: f64,
}

impl MetricRow {
    fn validate(&self) -> Result<()> {
        if !(self.rmse_hu >= 0.0) || !(-1.0..=1.0).contains(&self.ssim) || !(self.trace_rmse >= 0.0) {
            return Err(Error::numeric(format!(
                "invalid metric row: case {} method {} rmse {} ssim {} trace {}",
                self.case_id,
                self.method.name(),
                self.rmse_hu,
                self.ssim,
                self.trace_rmse
            )));
        }
        Ok(())
    }
}

/// Trained models available to the harness.
#[derive(Clone, Copy, Default)]
pub struct Models<'a> {
    pub pc: Option<&'a ModelBundle>,
    pub sc: Option<&'a ModelBundle>,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub rows: Vec<MetricRow>,
    pub methods_run: Vec<Method>,
    pub warnings: Vec<String>,
}

/// Completed sinogram for one method on one case.
pub fn complete_case(case: &TestCase, method: Method, cfg: &ExperimentConfig, models: &Models) -> Result<Sinogram> {
    match method {
        Method::Input => Ok(case.corrupted.clone()),
        Method::Li => li_complete(&case.corrupted, &case.trace),
        Method::Nmar => {
            // the segmentation prior comes from an initial LI-corrected
            // reconstruction; segmenting the raw streaked image classifies
            // streaks as bone and poisons the prior
            let geom = cfg.geometry();
            let initial = li_complete(&case.corrupted, &case.trace)?;
            let recon = fbp(&initial, &geom, (cfg.image_size, cfg.image_size), cfg.pixel_size, FbpOptions::default())?;
            let recon_hu = mu_to_hu(&recon, cfg.mu_water)?;
            let (out, _) = nmar_complete(
                &case.corrupted,
                &case.trace,
                &recon_hu,
                &SegmentationThresholds::default(),
                &geom,
                cfg.mu_water,
            )?;
            Ok(out)
        }
        Method::Pc => {
            let pc = models.pc.ok_or_else(|| Error::usage("pc model not available"))?;
            apply_completion(&case.corrupted, &case.trace, pc)
        }
        Method::PcSc => {
            let pc = models.pc.ok_or_else(|| Error::usage("pc model not available"))?;
            let sc = models.sc.ok_or_else(|| Error::usage("sc model not available"))?;
            let once = apply_completion(&case.corrupted, &case.trace, pc)?;
            apply_completion(&once, &case.trace, sc)
        }
    }
}

/// Reconstruct in HU with the metal region replaced by the configured
/// constant (skipped for the ground truth).
fn recon_hu(sino: &Sinogram, case: &TestCase, cfg: &ExperimentConfig, replace_metal: bool) -> Result<Image> {
    let image = fbp(sino, &cfg.geometry(), (cfg.image_size, cfg.image_size), cfg.pixel_size, FbpOptions::default())?;
    let mut hu = mu_to_hu(&image, cfg.mu_water)?;
    if replace_metal {
        for (v, &m) in hu.values_mut().iter_mut().zip(case.metal.values()) {
            if m == 1 {
                *v = cfg.metal_insert_hu;
            }
        }
    }
    Ok(hu)
}

fn evaluate_case(case: &TestCase, methods: &[Method], cfg: &ExperimentConfig, models: &Models) -> Result<Vec<MetricRow>> {
    let gt_hu = recon_hu(&case.clean, case, cfg, false)?;
    // metal pixels are excluded from RMSE and replaced consistently for SSIM
    let include = Mask::new(
        case.metal.width,
        case.metal.height,
        MaskDomain::Image,
        case.metal.values().iter().map(|&m| 1 - m).collect(),
    )?;
    let mut gt_display = gt_hu.clone();
    for (v, &m) in gt_display.values_mut().iter_mut().zip(case.metal.values()) {
        if m == 1 {
            *v = cfg.metal_insert_hu;
        }
    }

    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let completed = complete_case(case, method, cfg, models)?;
        let hu = recon_hu(&completed, case, cfg, true)?;
        let row = MetricRow {
            case_id: case.case_id,
            method,
            mask_size: case.mask_size,
            rmse_hu: rmse(&hu, &gt_hu, Some(&include))?,
            ssim: ssim(&hu, &gt_display, &SsimParams::default())?,
            trace_rmse: if case.trace.is_empty() {
                0.0
            } else {
                trace_rmse(&completed, &case.clean, &case.trace)?
            },
        };
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

fn bin_index(mask_size: usize, edges: &[usize]) -> usize {
    edges.iter().position(|&e| mask_size < e).unwrap_or(edges.len())
}

pub fn bin_label(bin: usize, edges: &[usize]) -> String {
    if bin == 0 {
        format!("<{}", edges[0])
    } else if bin == edges.len() {
        format!(">={}", edges[edges.len() - 1])
    } else {
        format!("{}-{}", edges[bin - 1], edges[bin])
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Run every available method over the test set and write the report:
/// per-case CSV, per-bin aggregates, metric-vs-size plots, qualitative
/// panels, and a summary. Deterministic given dataset + models.
pub fn run_experiment(ds: &Dataset, models: &Models, out_dir: &Path) -> Result<Report> {
    let cfg = &ds.config;
    let mut warnings = Vec::new();
    let mut methods_run = Vec::new();
    for &m in &cfg.methods {
        let available = match m {
            Method::Pc => models.pc.is_some(),
            Method::PcSc => models.pc.is_some() && models.sc.is_some(),
            _ => true,
        };
        if available {
            methods_run.push(m);
        } else {
            warnings.push(format!("method {} skipped: trained model not available", m.name()));
        }
    }
    if methods_run.is_empty() {
        return Err(Error::usage("no evaluable methods"));
    }

    let per_case: Vec<Vec<MetricRow>> = ds
        .test
        .par_iter()
        .map(|case| evaluate_case(case, &methods_run, cfg, models))
        .collect::<Result<_>>()?;
    let rows: Vec<MetricRow> = per_case.into_iter().flatten().collect();

    std::fs::create_dir_all(out_dir)?;

    // per-case csv
    let mut cases_csv = String::from("case_id,method,mask_size,rmse_hu,ssim,trace_rmse\n");
    for r in &rows {
        cases_csv.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6}\n",
            r.case_id,
            r.method.name(),
            r.mask_size,
            r.rmse_hu,
            r.ssim,
            r.trace_rmse
        ));
    }
    write_atomic(&out_dir.join("cases.csv"), cases_csv.as_bytes())?;

    // per-bin aggregates: exactly bins x methods rows
    let n_bins = cfg.size_bins.len() + 1;
    let mut aggregates_csv = String::from("bin,method,count,rmse_mean,rmse_std,ssim_mean,ssim_std\n");
    let mut series_rmse: Vec<Series> = Vec::new();
    let mut series_ssim: Vec<Series> = Vec::new();
    for (mi, &method) in methods_run.iter().enumerate() {
        let mut rmse_points = Vec::new();
        let mut ssim_points = Vec::new();
        for bin in 0..n_bins {
            let in_bin: Vec<&MetricRow> = rows
                .iter()
                .filter(|r| r.method == method && bin_index(r.mask_size, &cfg.size_bins) == bin)
                .collect();
            let label = bin_label(bin, &cfg.size_bins);
            if in_bin.is_empty() {
                aggregates_csv.push_str(&format!("{label},{},0,,,,\n", method.name()));
                continue;
            }
            let (rm, rs) = mean_std(&in_bin.iter().map(|r| r.rmse_hu).collect::<Vec<_>>());
            let (sm, ss) = mean_std(&in_bin.iter().map(|r| r.ssim).collect::<Vec<_>>());
            aggregates_csv.push_str(&format!(
                "{label},{},{},{rm:.6},{rs:.6},{sm:.6},{ss:.6}\n",
                method.name(),
                in_bin.len()
            ));
            let center = if bin == 0 {
                cfg.size_bins[0] as f64 / 2.0
            } else if bin == cfg.size_bins.len() {
                cfg.size_bins[bin - 1] as f64 * 1.5
            } else {
                (cfg.size_bins[bin - 1] + cfg.size_bins[bin]) as f64 / 2.0
            };
            rmse_points.push((center, rm));
            ssim_points.push((center, sm));
        }
        let color = PALETTE[mi % PALETTE.len()];
        series_rmse.push(Series { label: method.name().to_uppercase(), points: rmse_points, color });
        series_ssim.push(Series { label: method.name().to_uppercase(), points: ssim_points, color });
    }
    write_atomic(&out_dir.join("aggregates.csv"), aggregates_csv.as_bytes())?;
    line_plot(&out_dir.join("rmse_vs_size.png"), "RMSE VS MASK SIZE", "PIXELS", "HU", &series_rmse)?;
    line_plot(&out_dir.join("ssim_vs_size.png"), "SSIM VS MASK SIZE", "PIXELS", "SSIM", &series_ssim)?;

    // qualitative panels: ground truth then each method, windowed HU
    let panel_dir = out_dir.join("panels");
    std::fs::create_dir_all(&panel_dir)?;
    let picks: Vec<usize> = (0..ds.test.len().min(6))
        .map(|i| i * ds.test.len().max(1) / ds.test.len().min(6).max(1))
        .collect();
    let mut panel_readme = String::from("column order: ground-truth");
    for m in &methods_run {
        panel_readme.push_str(&format!(", {}", m.name()));
    }
    panel_readme.push('\n');
    write_atomic(&panel_dir.join("columns.txt"), panel_readme.as_bytes())?;
    for &pick in &picks {
        let case = &ds.test[pick];
        let gt = recon_hu(&case.clean, case, cfg, false)?;
        let mut columns: Vec<Image> = vec![gt];
        for &method in &methods_run {
            let completed = complete_case(case, method, cfg, models)?;
            columns.push(recon_hu(&completed, case, cfg, true)?);
        }
        let gap = 2usize;
        let (iw, ih) = (cfg.image_size, cfg.image_size);
        let total_w = columns.len() * iw + (columns.len() - 1) * gap;
        let mut sheet = vec![500.0; total_w * ih];
        for (ci, col) in columns.iter().enumerate() {
            let x0 = ci * (iw + gap);
            for row in 0..ih {
                for cx in 0..iw {
                    sheet[row * total_w + x0 + cx] = col.get(row, cx);
                }
            }
        }
        write_windowed(
            &panel_dir.join(format!("case_{:03}.png", case.case_id)),
            total_w,
            ih,
            &sheet,
            (-1000.0, 1000.0),
            GrayDepth::Eight,
        )?;
    }

    // summary
    let mut summary = String::from("per-method means over all cases\n");
    for &method in &methods_run {
        let r: Vec<f64> = rows.iter().filter(|x| x.method == method).map(|x| x.rmse_hu).collect();
        let s: Vec<f64> = rows.iter().filter(|x| x.method == method).map(|x| x.ssim).collect();
        let t: Vec<f64> = rows.iter().filter(|x| x.method == method).map(|x| x.trace_rmse).collect();
        summary.push_str(&format!(
            "{:8}  rmse {:8.2} HU   ssim {:.4}   trace-rmse {:.4}\n",
            method.name(),
            mean_std(&r).0,
            mean_std(&s).0,
            mean_std(&t).0
        ));
    }
    for w in &warnings {
        summary.push_str(&format!("warning: {w}\n"));
    }
    write_atomic(&out_dir.join("summary.txt"), summary.as_bytes())?;

    Ok(Report { rows, methods_run, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::radon::radon;
    use crate::ct::render_phantom_supersampled;
    use crate::eval::dataset::{build_dataset, random_phantom};
    use crate::mask::MaskDomain;

    fn baseline_config() -> ExperimentConfig {
        ExperimentConfig {
            train_phantoms: 2,
            test_phantoms: 2,
            masks_per_phantom: 1,
            test_cases: 4,
            n_views: 32,
            n_detectors: 32,
            image_size: 32,
            methods: vec![Method::Input, Method::Li, Method::Nmar],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn report_row_and_aggregate_counts() {
        let ds = build_dataset(&baseline_config(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&ds, &Models::default(), dir.path()).unwrap();
        assert_eq!(report.rows.len(), 4 * 3);
        let aggregates = std::fs::read_to_string(dir.path().join("aggregates.csv")).unwrap();
        let n_bins = ds.config.size_bins.len() + 1;
        assert_eq!(aggregates.lines().count() - 1, n_bins * 3, "bins x methods rows");
        assert!(dir.path().join("rmse_vs_size.png").exists());
        assert!(dir.path().join("cases.csv").exists());
    }

    #[test]
    fn learned_methods_skipped_without_models() {
        let mut cfg = baseline_config();
        cfg.methods = vec![Method::Input, Method::Pc, Method::PcSc];
        let ds = build_dataset(&cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&ds, &Models::default(), dir.path()).unwrap();
        assert_eq!(report.methods_run, vec![Method::Input]);
        assert_eq!(report.warnings.len(), 2);
    }

    #[test]
    fn empty_mask_case_scores_perfectly() {
        // construct a noiseless single-bin case with no metal: the input
        // method must score RMSE 0, SSIM 1
        let cfg = ExperimentConfig {
            noise: false,
            bins: crate::ct::Physics::single_bin().bins,
            n_views: 32,
            n_detectors: 32,
            image_size: 32,
            methods: vec![Method::Input],
            ..ExperimentConfig::default()
        };
        let spec = random_phantom(32, 1.0, cfg.mu_water, 5);
        let tissue = render_phantom_supersampled(&spec, 32, 32, 1.0, 2).unwrap();
        let clean = radon(&tissue, &cfg.geometry()).unwrap();
        let case = TestCase {
            case_id: 0,
            phantom_id: 0,
            clean: clean.clone(),
            corrupted: clean,
            trace: Mask::empty(32, 32, MaskDomain::Trace),
            metal: Mask::empty(32, 32, MaskDomain::Image),
            mask_size: 0,
        };
        let rows = evaluate_case(&case, &[Method::Input], &cfg, &Models::default()).unwrap();
        assert!(rows[0].rmse_hu < 1e-9, "rmse {}", rows[0].rmse_hu);
        assert!((rows[0].ssim - 1.0).abs() < 1e-9, "ssim {}", rows[0].ssim);
    }

    #[test]
    fn li_near_exact_on_affine_rows() {
        // a synthetic case whose clean sinogram is per-row affine: LI must
        // recover it inside the trace, and the image RMSE collapses
        let cfg = ExperimentConfig {
            noise: false,
            bins: crate::ct::Physics::single_bin().bins,
            n_views: 32,
            n_detectors: 32,
            image_size: 32,
            methods: vec![Method::Li],
            ..ExperimentConfig::default()
        };
        let values: Vec<f64> = (0..32 * 32)
            .map(|i| {
                let (v, d) = (i / 32, i % 32);
                0.5 + 0.01 * v as f64 + 0.02 * d as f64
            })
            .collect();
        let clean = Sinogram::new(32, 32, values).unwrap();
        let mut corrupted = clean.clone();
        let mut trace = Mask::empty(32, 32, MaskDomain::Trace);
        for v in 0..32 {
            for d in 12..20 {
                trace.set(v, d, 1);
                corrupted.view_mut(v)[d] += 5.0; // metal garbage
            }
        }
        let case = TestCase {
            case_id: 0,
            phantom_id: 0,
            clean,
            corrupted,
            trace,
            metal: Mask::empty(32, 32, MaskDomain::Image),
            mask_size: 0,
        };
        let rows = evaluate_case(&case, &[Method::Li], &cfg, &Models::default()).unwrap();
        assert!(rows[0].trace_rmse < 1e-12, "trace rmse {}", rows[0].trace_rmse);
        assert!(rows[0].rmse_hu < 1.0, "image rmse {}", rows[0].rmse_hu);
    }
}
