//! Experiment configuration and dataset construction: phantom rendering,
//! projection synthesis, mask placement, and normalized train/test shards.
//! Train and test phantoms never overlap.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::ct::geometry::{Beam, ScanGeometry};
use crate::ct::phantom::{render_tissue, Ellipse, PhantomSpec};
use crate::ct::radon::radon;
use crate::ct::simulate::{metal_trace, simulate_metal_sinogram, EnergyBin, NoiseMode, Physics};
use crate::ct::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::gan::{Normalization, TrainingSample};
use crate::io::config::Config;
use crate::io::marf::{self, Dtype};
use crate::mask::{builtin_library, gen_blob_mask, place_metal_mask, BlobParams, Mask, MaskDomain};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskSource {
    Blob,
    MetalLibrary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Input,
    Li,
    Nmar,
    Pc,
    PcSc,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "input" => Ok(Method::Input),
            "li" => Ok(Method::Li),
            "nmar" => Ok(Method::Nmar),
            "pc" => Ok(Method::Pc),
            "pc+sc" => Ok(Method::PcSc),
            other => Err(Error::config(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Input => "input",
            Method::Li => "li",
            Method::Nmar => "nmar",
            Method::Pc => "pc",
            Method::PcSc => "pc+sc",
        }
    }
}

/// Full experiment description; parsed from the structured text config.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    // geometry
    pub n_views: usize,
    pub n_detectors: usize,
    pub detector_spacing: f64,
    pub angular_range: f64,
    pub beam: Beam,
    pub source_to_center: f64,
    // image
    pub image_size: usize,
    pub pixel_size: f64,
    pub mu_water: f64,
    // phantoms
    pub train_phantoms: usize,
    pub test_phantoms: usize,
    // masks
    pub mask_source: MaskSource,
    pub masks_per_phantom: usize,
    pub test_cases: usize,
    pub metal_mu: f64,
    // physics
    pub photons: f64,
    pub noise: bool,
    pub bins: Vec<EnergyBin>,
    // training
    pub lr: f64,
    pub beta1: f64,
    pub lambda: f64,
    pub batch: usize,
    pub iters_pc: usize,
    pub iters_sc: usize,
    // model
    pub gen_channels: Vec<usize>,
    pub disc_channels: Vec<usize>,
    pub mpn: bool,
    // eval
    pub methods: Vec<Method>,
    /// Mask-size bin edges in pixels; bins are (<e0), [e0,e1), ..., (>=last).
    pub size_bins: Vec<usize>,
    pub metal_insert_hu: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_views: 64,
            n_detectors: 64,
            detector_spacing: 1.0,
            angular_range: std::f64::consts::TAU,
            beam: Beam::Parallel,
            source_to_center: 595.0,
            image_size: 64,
            pixel_size: 1.0,
            mu_water: 0.02,
            train_phantoms: 40,
            test_phantoms: 10,
            mask_source: MaskSource::MetalLibrary,
            masks_per_phantom: 5,
            test_cases: 50,
            metal_mu: 0.30,
            photons: 2e7,
            noise: true,
            bins: Physics::two_bin_iron().bins,
            lr: 5e-4,
            beta1: 0.5,
            lambda: 100.0,
            batch: 16,
            iters_pc: 2000,
            iters_sc: 800,
            gen_channels: vec![32, 64, 128, 256],
            disc_channels: vec![32, 64, 128],
            mpn: true,
            methods: vec![Method::Input, Method::Li, Method::Nmar, Method::Pc, Method::PcSc],
            size_bins: vec![200, 500, 1000, 2000],
            metal_insert_hu: 3000.0,
        }
    }
}

impl ExperimentConfig {
    pub fn geometry(&self) -> ScanGeometry {
        ScanGeometry {
            n_views: self.n_views,
            angular_range: self.angular_range,
            n_detectors: self.n_detectors,
            detector_spacing: self.detector_spacing,
            source_to_center: self.source_to_center,
            beam: self.beam,
        }
    }

    pub fn physics(&self) -> Physics {
        Physics { bins: self.bins.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let half_diag = 0.5 * (2.0f64).sqrt() * self.image_size as f64 * self.pixel_size;
        self.geometry().validate(half_diag)?;
        if self.train_phantoms == 0 || self.test_phantoms == 0 {
            return Err(Error::config("need at least one train and one test phantom"));
        }
        if !(self.mu_water > 0.0) {
            return Err(Error::config("mu_water must be positive"));
        }
        if self.size_bins.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("mask-size bin edges must increase strictly"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("method list is empty"));
        }
        self.physics().validate_public()?;
        Ok(())
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let mut out = ExperimentConfig::default();
        if let Some(s) = cfg.section("geometry")? {
            s.check_keys(&["n_views", "n_detectors", "detector_spacing", "angular_range", "beam", "source_to_center"])?;
            if s.get("n_views").is_some() {
                out.n_views = s.get_usize("n_views")?;
            }
            if s.get("n_detectors").is_some() {
                out.n_detectors = s.get_usize("n_detectors")?;
            }
            if s.get("detector_spacing").is_some() {
                out.detector_spacing = s.get_f64("detector_spacing")?;
            }
            if s.get("angular_range").is_some() {
                out.angular_range = s.get_f64("angular_range")?;
            }
            if s.get("source_to_center").is_some() {
                out.source_to_center = s.get_f64("source_to_center")?;
            }
            if let Some(beam) = s.get("beam") {
                out.beam = match beam {
                    "parallel" => Beam::Parallel,
                    "fan" => Beam::Fan,
                    other => return Err(Error::config(format!("unknown beam {other:?}"))),
                };
            }
        }
        if let Some(s) = cfg.section("image")? {
            s.check_keys(&["size", "pixel_size", "mu_water"])?;
            if s.get("size").is_some() {
                out.image_size = s.get_usize("size")?;
            }
            if s.get("pixel_size").is_some() {
                out.pixel_size = s.get_f64("pixel_size")?;
            }
            if s.get("mu_water").is_some() {
                out.mu_water = s.get_f64("mu_water")?;
            }
        }
        if let Some(s) = cfg.section("phantoms")? {
            s.check_keys(&["train", "test"])?;
            if s.get("train").is_some() {
                out.train_phantoms = s.get_usize("train")?;
            }
            if s.get("test").is_some() {
                out.test_phantoms = s.get_usize("test")?;
            }
        }
        if let Some(s) = cfg.section("masks")? {
            s.check_keys(&["source", "per_phantom", "test_cases", "metal_mu"])?;
            if let Some(src) = s.get("source") {
                out.mask_source = match src {
                    "blob" => MaskSource::Blob,
                    "metal-library" => MaskSource::MetalLibrary,
                    other => return Err(Error::config(format!("unknown mask source {other:?}"))),
                };
            }
            if s.get("per_phantom").is_some() {
                out.masks_per_phantom = s.get_usize("per_phantom")?;
            }
            if s.get("test_cases").is_some() {
                out.test_cases = s.get_usize("test_cases")?;
            }
            if s.get("metal_mu").is_some() {
                out.metal_mu = s.get_f64("metal_mu")?;
            }
        }
        if let Some(s) = cfg.section("physics")? {
            s.check_keys(&["photons", "noise", "bins"])?;
            if s.get("photons").is_some() {
                out.photons = s.get_f64("photons")?;
            }
            if s.get("noise").is_some() {
                out.noise = s.get_bool("noise")?;
            }
            if let Some(bins) = s.get("bins") {
                out.bins = parse_bins(bins)?;
            }
        }
        if let Some(s) = cfg.section("train")? {
            s.check_keys(&["lr", "beta1", "lambda", "batch", "iters_pc", "iters_sc"])?;
            if s.get("lr").is_some() {
                out.lr = s.get_f64("lr")?;
            }
            if s.get("beta1").is_some() {
                out.beta1 = s.get_f64("beta1")?;
            }
            if s.get("lambda").is_some() {
                out.lambda = s.get_f64("lambda")?;
            }
            if s.get("batch").is_some() {
                out.batch = s.get_usize("batch")?;
            }
            if s.get("iters_pc").is_some() {
                out.iters_pc = s.get_usize("iters_pc")?;
            }
            if s.get("iters_sc").is_some() {
                out.iters_sc = s.get_usize("iters_sc")?;
            }
        }
        if let Some(s) = cfg.section("model")? {
            s.check_keys(&["gen_channels", "disc_channels", "mpn"])?;
            if s.get("gen_channels").is_some() {
                out.gen_channels = s.get_usize_list("gen_channels")?;
            }
            if s.get("disc_channels").is_some() {
                out.disc_channels = s.get_usize_list("disc_channels")?;
            }
            if s.get("mpn").is_some() {
                out.mpn = s.get_bool("mpn")?;
            }
        }
        if let Some(s) = cfg.section("eval")? {
            s.check_keys(&["methods", "size_bins", "metal_insert_hu"])?;
            if s.get("methods").is_some() {
                out.methods = s.get_str_list("methods")?.iter().map(|m| Method::parse(m)).collect::<Result<_>>()?;
            }
            if s.get("size_bins").is_some() {
                out.size_bins = s.get_usize_list("size_bins")?;
            }
            if s.get("metal_insert_hu").is_some() {
                out.metal_insert_hu = s.get_f64("metal_insert_hu")?;
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn to_config_string(&self) -> String {
        let bins = self
            .bins
            .iter()
            .map(|b| format!("{}:{}:{}", b.fraction, b.tissue_scale, b.metal_scale))
            .collect::<Vec<_>>()
            .join(", ");
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "[geometry]\nn_views = {}\nn_detectors = {}\ndetector_spacing = {}\nangular_range = {}\nbeam = {}\nsource_to_center = {}\n\n\
             [image]\nsize = {}\npixel_size = {}\nmu_water = {}\n\n\
             [phantoms]\ntrain = {}\ntest = {}\n\n\
             [masks]\nsource = {}\nper_phantom = {}\ntest_cases = {}\nmetal_mu = {}\n\n\
             [physics]\nphotons = {}\nnoise = {}\nbins = {}\n\n\
             [train]\nlr = {}\nbeta1 = {}\nlambda = {}\nbatch = {}\niters_pc = {}\niters_sc = {}\n\n\
             [model]\ngen_channels = {}\ndisc_channels = {}\nmpn = {}\n\n\
             [eval]\nmethods = {}\nsize_bins = {}\nmetal_insert_hu = {}\n",
            self.n_views,
            self.n_detectors,
            self.detector_spacing,
            self.angular_range,
            if self.beam == Beam::Parallel { "parallel" } else { "fan" },
            self.source_to_center,
            self.image_size,
            self.pixel_size,
            self.mu_water,
            self.train_phantoms,
            self.test_phantoms,
            if self.mask_source == MaskSource::Blob { "blob" } else { "metal-library" },
            self.masks_per_phantom,
            self.test_cases,
            self.metal_mu,
            self.photons,
            self.noise,
            bins,
            self.lr,
            self.beta1,
            self.lambda,
            self.batch,
            self.iters_pc,
            self.iters_sc,
            join(&self.gen_channels),
            join(&self.disc_channels),
            self.mpn,
            self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
            join(&self.size_bins),
            self.metal_insert_hu,
        )
    }
}

impl Physics {
    pub fn validate_public(&self) -> Result<()> {
        if self.bins.is_empty() || self.bins.iter().any(|b| b.fraction <= 0.0) {
            return Err(Error::config("physics bins must be nonempty with positive fractions"));
        }
        Ok(())
    }
}

fn parse_bins(text: &str) -> Result<Vec<EnergyBin>> {
    text.split(',')
        .map(|part| {
            let fields: Vec<&str> = part.trim().split(':').collect();
            if fields.len() != 3 {
                return Err(Error::config(format!("bin {part:?} must be fraction:tissue:metal")));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("bad number {s:?} in physics bins")))
            };
            Ok(EnergyBin { fraction: parse(fields[0])?, tissue_scale: parse(fields[1])?, metal_scale: parse(fields[2])? })
        })
        .collect()
}

/// One held-out evaluation case.
#[derive(Clone, Debug)]
pub struct TestCase {
    pub case_id: usize,
    pub phantom_id: usize,
    /// Noiseless metal-free sinogram; its FBP is the ground truth image.
    pub clean: Sinogram,
    /// Simulated metal-corrupted sinogram.
    pub corrupted: Sinogram,
    pub trace: Mask,
    /// Image-domain metal mask.
    pub metal: Mask,
    /// Metal pixel count; the binning key.
    pub mask_size: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub norm: Normalization,
    pub train: Vec<TrainingSample>,
    pub train_phantom_ids: Vec<usize>,
    pub test: Vec<TestCase>,
}

/// Random soft-tissue phantom: one body ellipse plus a few interior
/// structures, scaled to the field of view.
pub fn random_phantom(image_size: usize, pixel_size: f64, mu_water: f64, seed: u64) -> PhantomSpec {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let fov = image_size as f64 * pixel_size;
    let mut ellipses = Vec::new();
    let body_a = fov * (0.30 + 0.08 * rng.random::<f64>());
    let body_b = fov * (0.26 + 0.08 * rng.random::<f64>());
    let body_rot = rng.random::<f64>() * std::f64::consts::PI;
    ellipses.push(Ellipse {
        center: (fov * 0.02 * (rng.random::<f64>() - 0.5), fov * 0.02 * (rng.random::<f64>() - 0.5)),
        axes: (body_a, body_b),
        rotation: body_rot,
        mu: mu_water * (0.92 + 0.12 * rng.random::<f64>()),
    });
    let inner = rng.random_range(2..=5);
    for _ in 0..inner {
        let r = rng.random::<f64>().sqrt() * 0.55;
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let center = (r * body_a * 0.8 * angle.cos(), r * body_b * 0.8 * angle.sin());
        let axes = (
            fov * (0.04 + 0.10 * rng.random::<f64>()),
            fov * (0.04 + 0.10 * rng.random::<f64>()),
        );
        // bone-like positive or marrow/fat-like negative contrast
        let contrast = if rng.random::<f64>() < 0.6 {
            mu_water * (0.25 + 0.45 * rng.random::<f64>())
        } else {
            -mu_water * (0.15 + 0.30 * rng.random::<f64>())
        };
        ellipses.push(Ellipse { center, axes, rotation: rng.random::<f64>() * std::f64::consts::PI, mu: contrast });
    }
    PhantomSpec { ellipses, metal: Vec::new() }
}

/// Place a library silhouette (rescaled canvas cycle) somewhere in the
/// central region; retries until the placement intersects the canvas.
fn place_random_metal(
    library: &[Vec<Mask>],
    image_size: usize,
    rng: &mut ChaCha12Rng,
    seed_tag: u64,
) -> Result<Mask> {
    for salt in 0..32u64 {
        let scale_idx = rng.random_range(0..library.len());
        let shape_idx = rng.random_range(0..library[scale_idx].len());
        let shape = &library[scale_idx][shape_idx];
        let margin = (image_size / 5) as i64;
        let max_row = image_size as i64 - shape.height as i64 - margin;
        let max_col = image_size as i64 - shape.width as i64 - margin;
        if max_row <= margin || max_col <= margin {
            continue;
        }
        let row = rng.random_range(margin..max_row) as isize;
        let col = rng.random_range(margin..max_col) as isize;
        let placed = place_metal_mask(shape, (image_size, image_size), (row, col), seed_tag.wrapping_add(salt))?;
        if !placed.fully_outside && placed.mask.coverage() >= 4 {
            return Ok(placed.mask);
        }
    }
    Err(Error::numeric("could not place a metal mask inside the canvas"))
}

/// Trace-domain training mask from the configured source.
fn training_mask(
    cfg: &ExperimentConfig,
    geom: &ScanGeometry,
    library: &[Vec<Mask>],
    rng: &mut ChaCha12Rng,
    seed: u64,
) -> Result<Mask> {
    match cfg.mask_source {
        MaskSource::Blob => {
            let params = BlobParams {
                n_blobs: (1, 3),
                radius: (cfg.n_detectors as f64 * 0.05, cfg.n_detectors as f64 * 0.16),
                irregularity: 0.5,
            };
            let mut mask = gen_blob_mask(cfg.n_detectors, cfg.n_views, &params, seed)?;
            if mask.is_empty() {
                // an empty training mask teaches nothing; draw one disk
                let r = cfg.n_detectors / 8;
                for row in 0..cfg.n_views {
                    for col in 0..cfg.n_detectors {
                        let dr = row as f64 - cfg.n_views as f64 / 2.0;
                        let dc = col as f64 - cfg.n_detectors as f64 / 2.0;
                        if (dr * dr + dc * dc).sqrt() < r as f64 {
                            mask.set(row, col, 1);
                        }
                    }
                }
            }
            Ok(mask)
        }
        MaskSource::MetalLibrary => {
            let placed = place_random_metal(library, cfg.image_size, rng, seed)?;
            let trace = metal_trace(&placed, geom)?;
            if trace.is_empty() {
                return Err(Error::numeric("metal placement produced an empty trace"));
            }
            Ok(trace)
        }
    }
}

/// Library silhouettes at a cycle of canvas sizes, so implant pixel counts
/// span the report's size bins. Shapes too thin to rasterize at a small
/// canvas are dropped.
fn scaled_library(image_size: usize) -> Vec<Vec<Mask>> {
    let sizes = [
        (image_size / 5).max(8),
        (image_size * 3 / 10).max(10),
        (image_size * 2 / 5).max(12),
        (image_size * 11 / 20).max(14),
    ];
    sizes
        .iter()
        .map(|&s| builtin_library(s).into_iter().filter(|m| m.coverage() >= 4).collect::<Vec<_>>())
        .filter(|lib: &Vec<Mask>| !lib.is_empty())
        .collect()
}

/// Build the full dataset: train shards of masked/unmasked sinogram pairs
/// split from test phantoms, plus corrupted held-out cases.
pub fn build_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let geom = cfg.geometry();
    let library = scaled_library(cfg.image_size);

    // train phantoms and their clean sinograms
    let mut clean_sinos = Vec::with_capacity(cfg.train_phantoms);
    for phantom_id in 0..cfg.train_phantoms {
        let spec = random_phantom(cfg.image_size, cfg.pixel_size, cfg.mu_water, derive_seed(seed, "phantom", phantom_id as u64));
        let tissue = render_tissue(&spec, cfg.image_size, cfg.image_size, cfg.pixel_size, 2)?;
        clean_sinos.push(radon(&tissue, &geom)?);
    }
    let norm = Normalization::from_values(clean_sinos.iter().flat_map(|s| s.values().iter()))?;

    let mut train = Vec::with_capacity(cfg.train_phantoms * cfg.masks_per_phantom);
    let mut train_phantom_ids = Vec::with_capacity(train.capacity());
    for (phantom_id, sino) in clean_sinos.iter().enumerate() {
        let y_norm: Vec<f64> = sino.values().iter().map(|&v| norm.encode(v)).collect();
        for j in 0..cfg.masks_per_phantom {
            let item = (phantom_id * cfg.masks_per_phantom + j) as u64;
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "train-mask", item));
            let s = training_mask(cfg, &geom, &library, &mut rng, derive_seed(seed, "train-mask-inner", item))?;
            let x: Vec<f64> = y_norm
                .iter()
                .zip(s.values())
                .map(|(&v, &m)| if m == 1 { 0.0 } else { v })
                .collect();
            train.push(TrainingSample {
                x: Tensor::from_vec(vec![1, 1, cfg.n_views, cfg.n_detectors], x)?,
                y: Tensor::from_vec(vec![1, 1, cfg.n_views, cfg.n_detectors], y_norm.clone())?,
                s,
            });
            train_phantom_ids.push(phantom_id);
        }
    }

    // held-out cases with real simulated corruption
    let mut test = Vec::with_capacity(cfg.test_cases);
    let physics = cfg.physics();
    for case_id in 0..cfg.test_cases {
        let phantom_id = cfg.train_phantoms + case_id % cfg.test_phantoms;
        let spec = random_phantom(cfg.image_size, cfg.pixel_size, cfg.mu_water, derive_seed(seed, "phantom", phantom_id as u64));
        let tissue = render_tissue(&spec, cfg.image_size, cfg.image_size, cfg.pixel_size, 2)?;
        let clean = radon(&tissue, &geom)?;

        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "test-metal", case_id as u64));
        let metal = place_random_metal(&library, cfg.image_size, &mut rng, derive_seed(seed, "test-metal-inner", case_id as u64))?;
        let trace = metal_trace(&metal, &geom)?;

        // metal replaces tissue
        let mut with_metal = tissue.clone();
        for (v, &m) in with_metal.values_mut().iter_mut().zip(metal.values()) {
            if m == 1 {
                *v = cfg.metal_mu;
            }
        }
        let noise = if cfg.noise {
            NoiseMode::Poisson { seed: derive_seed(seed, "noise", case_id as u64) }
        } else {
            NoiseMode::Off
        };
        let corrupted = simulate_metal_sinogram(&with_metal, &metal, &geom, &physics, cfg.photons, noise)?;

        let mask_size = metal.coverage();
        test.push(TestCase { case_id, phantom_id, clean, corrupted, trace, metal, mask_size });
    }

    Ok(Dataset { config: cfg.clone(), seed, norm, train, train_phantom_ids, test })
}

fn stack_tensors(items: impl Iterator<Item = Vec<f64>>, item_shape: Vec<usize>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut count = 0usize;
    for item in items {
        data.extend(item);
        count += 1;
    }
    let mut shape = vec![count];
    shape.extend(item_shape);
    Tensor::from_vec(shape, data)
}

/// Persist shards: stacked MARF tensors plus a meta.txt echoing the
/// configuration and normalization. Byte-identical under the same inputs.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    let train_dir = dir.join("train");
    let test_dir = dir.join("test");
    std::fs::create_dir_all(&train_dir)?;
    std::fs::create_dir_all(&test_dir)?;

    let meta = format!(
        "{}\n[dataset]\nseed = {}\nnorm_min = {}\nnorm_max = {}\ntrain_samples = {}\ntest_cases = {}\n",
        ds.config.to_config_string(),
        ds.seed,
        ds.norm.min,
        ds.norm.max,
        ds.train.len(),
        ds.test.len()
    );
    crate::io::write_atomic(&dir.join("meta.txt"), meta.as_bytes())?;

    let (v, d) = (ds.config.n_views, ds.config.n_detectors);
    let img = ds.config.image_size;
    marf::write_file(
        &train_dir.join("x.marf"),
        &stack_tensors(ds.train.iter().map(|s| s.x.data().to_vec()), vec![1, v, d])?,
        Dtype::F64,
    )?;
    marf::write_file(
        &train_dir.join("y.marf"),
        &stack_tensors(ds.train.iter().map(|s| s.y.data().to_vec()), vec![1, v, d])?,
        Dtype::F64,
    )?;
    marf::write_file(
        &train_dir.join("s.marf"),
        &stack_tensors(ds.train.iter().map(|s| s.s.to_f64()), vec![1, v, d])?,
        Dtype::F64,
    )?;
    marf::write_file(
        &train_dir.join("phantom_ids.marf"),
        &Tensor::from_vec(vec![ds.train.len()], ds.train_phantom_ids.iter().map(|&i| i as f64).collect())?,
        Dtype::F64,
    )?;

    marf::write_file(
        &test_dir.join("clean.marf"),
        &stack_tensors(ds.test.iter().map(|c| c.clean.values().to_vec()), vec![v, d])?,
        Dtype::F64,
    )?;
    marf::write_file(
        &test_dir.join("corrupted.marf"),
        &stack_tensors(ds.test.iter().map(|c| c.corrupted.values().to_vec()), vec![v, d])?,
        Dtype::F64,
    )?;
    marf::write_file(
        &test_dir.join("trace.marf"),
        &stack_tensors(ds.test.iter().map(|c| c.trace.to_f64()), vec![v, d])?,
        Dtype::F64,
    )?;
    marf::write_file(
        &test_dir.join("metal.marf"),
        &stack_tensors(ds.test.iter().map(|c| c.metal.to_f64()), vec![img, img])?,
        Dtype::F64,
    )?;
    marf::write_file(
        &test_dir.join("phantom_ids.marf"),
        &Tensor::from_vec(vec![ds.test.len()], ds.test.iter().map(|c| c.phantom_id as f64).collect())?,
        Dtype::F64,
    )?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta = Config::load(&dir.join("meta.txt"))?;
    let config = ExperimentConfig::from_config(&meta)?;
    let ds_sec = meta.section("dataset")?.ok_or_else(|| Error::config("meta.txt missing [dataset]"))?;
    let seed = ds_sec.get_u64("seed")?;
    let norm = Normalization { min: ds_sec.get_f64("norm_min")?, max: ds_sec.get_f64("norm_max")? };

    let (v, d) = (config.n_views, config.n_detectors);
    let img = config.image_size;
    let train_dir = dir.join("train");
    let test_dir = dir.join("test");

    let unstack = |t: &Tensor, item: usize| -> Vec<Vec<f64>> {
        t.data().chunks(item).map(|c| c.to_vec()).collect()
    };

    let xs = marf::read_file(&train_dir.join("x.marf"))?;
    let ys = marf::read_file(&train_dir.join("y.marf"))?;
    let ss = marf::read_file(&train_dir.join("s.marf"))?;
    let ids = marf::read_file(&train_dir.join("phantom_ids.marf"))?;
    let n_train = ids.numel();
    if xs.numel() != n_train * v * d || ys.numel() != n_train * v * d || ss.numel() != n_train * v * d {
        return Err(Error::config("train shards are inconsistent with meta.txt"));
    }
    let mut train = Vec::with_capacity(n_train);
    for ((x, y), s) in unstack(&xs, v * d).into_iter().zip(unstack(&ys, v * d)).zip(unstack(&ss, v * d)) {
        train.push(TrainingSample {
            x: Tensor::from_vec(vec![1, 1, v, d], x)?,
            y: Tensor::from_vec(vec![1, 1, v, d], y)?,
            s: Mask::from_f64(d, v, MaskDomain::Trace, &s, 0.5)?,
        });
    }

    let clean = marf::read_file(&test_dir.join("clean.marf"))?;
    let corrupted = marf::read_file(&test_dir.join("corrupted.marf"))?;
    let trace = marf::read_file(&test_dir.join("trace.marf"))?;
    let metal = marf::read_file(&test_dir.join("metal.marf"))?;
    let test_ids = marf::read_file(&test_dir.join("phantom_ids.marf"))?;
    let n_test = test_ids.numel();
    let mut test = Vec::with_capacity(n_test);
    let cleans = unstack(&clean, v * d);
    let correupteds = unstack(&corrupted, v * d);
    let traces = unstack(&trace, v * d);
    let metals = unstack(&metal, img * img);
    for case_id in 0..n_test {
        let metal = Mask::from_f64(img, img, MaskDomain::Image, &metals[case_id], 0.5)?;
        let mask_size = metal.coverage();
        test.push(TestCase {
            case_id,
            phantom_id: test_ids.data()[case_id] as usize,
            clean: Sinogram::new(v, d, cleans[case_id].clone())?,
            corrupted: Sinogram::new(v, d, correupteds[case_id].clone())?,
            trace: Mask::from_f64(d, v, MaskDomain::Trace, &traces[case_id], 0.5)?,
            metal,
            mask_size,
        });
    }

    Ok(Dataset {
        config,
        seed,
        norm,
        train,
        train_phantom_ids: ids.data().iter().map(|&v| v as usize).collect(),
        test,
    })
}

/// Ground-truth reconstruction for a case: FBP of the clean sinogram.
pub fn ground_truth(case: &TestCase, cfg: &ExperimentConfig) -> Result<Image> {
    crate::ct::fbp(
        &case.clean,
        &cfg.geometry(),
        (cfg.image_size, cfg.image_size),
        cfg.pixel_size,
        crate::ct::FbpOptions::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            train_phantoms: 3,
            test_phantoms: 2,
            masks_per_phantom: 2,
            test_cases: 4,
            n_views: 32,
            n_detectors: 32,
            image_size: 32,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn split_has_no_phantom_leakage() {
        let ds = build_dataset(&tiny_config(), 42).unwrap();
        let train_ids: std::collections::BTreeSet<usize> = ds.train_phantom_ids.iter().cloned().collect();
        for case in &ds.test {
            assert!(!train_ids.contains(&case.phantom_id), "phantom {} leaked", case.phantom_id);
        }
    }

    #[test]
    fn samples_satisfy_inpainting_contract() {
        let ds = build_dataset(&tiny_config(), 42).unwrap();
        for sample in &ds.train {
            sample.validate().unwrap();
        }
    }

    #[test]
    fn same_seed_byte_identical_shards() {
        let cfg = tiny_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        save_dataset(&build_dataset(&cfg, 7).unwrap(), dir_a.path()).unwrap();
        save_dataset(&build_dataset(&cfg, 7).unwrap(), dir_b.path()).unwrap();
        for name in ["train/x.marf", "train/y.marf", "train/s.marf", "test/corrupted.marf", "meta.txt"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let ds = build_dataset(&tiny_config(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.train.len(), ds.train.len());
        assert_eq!(back.test.len(), ds.test.len());
        assert_eq!(back.norm, ds.norm);
        assert_eq!(back.train[0].x.data(), ds.train[0].x.data());
        assert_eq!(back.test[1].corrupted.values(), ds.test[1].corrupted.values());
        assert_eq!(back.test[1].mask_size, ds.test[1].mask_size);
    }

    #[test]
    fn config_text_roundtrip() {
        let cfg = tiny_config();
        let text = cfg.to_config_string();
        let parsed = ExperimentConfig::from_config(&Config::parse(&text).unwrap()).unwrap();
        assert_eq!(parsed.n_views, cfg.n_views);
        assert_eq!(parsed.gen_channels, cfg.gen_channels);
        assert_eq!(parsed.methods, cfg.methods);
        assert_eq!(parsed.bins, cfg.bins);
    }
}
