//! Command-line driver: dataset simulation, the two training stages,
//! classical baselines, evaluation reports, and the gradient-check suite.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sinomar::error::Error;
use sinomar::eval::{build_dataset, load_dataset, run_experiment, save_dataset, ExperimentConfig, Method, Models};
use sinomar::gan::{curves_to_csv, sc_dataset_from_pc, train_pc, train_sc, Hyper, ModelBundle};
use sinomar::io::config::Config;
use sinomar::io::write_atomic;
use sinomar::mask::{builtin_library, write_library};

#[derive(Parser)]
#[command(name = "sinomar", about = "Desk-scale CT metal artifact reduction toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file (structured text); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all derived random streams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the train/test dataset shards and the mask library
    Simulate(Common),
    /// Train the projection-completion model on the dataset shards
    TrainPc(Common),
    /// Train the residual sinogram-correction model (requires a PC model)
    TrainSc(Common),
    /// Run the classical baselines (LI, NMAR) over the test shard
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods (default: li,nmar)
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the full evaluation report over the test shard
    Eval {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods; defaults to the config's list
        #[arg(long)]
        method: Option<String>,
    },
    /// Verify the tensor engine against finite differences
    Gradcheck,
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    match &common.config {
        Some(path) => ExperimentConfig::from_config(&Config::load(path)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_methods(text: &str) -> Result<Vec<Method>, Error> {
    text.split(',').map(|m| Method::parse(m.trim())).collect()
}

fn hyper_of(cfg: &ExperimentConfig, iters: usize, seed: u64) -> Hyper {
    Hyper { lr: cfg.lr, beta1: cfg.beta1, lambda: cfg.lambda, batch: cfg.batch, iters, seed }
}

fn gan_configs(cfg: &ExperimentConfig) -> (sinomar::gan::GeneratorConfig, sinomar::gan::DiscriminatorConfig) {
    let g = sinomar::gan::GeneratorConfig {
        channels: cfg.gen_channels.clone(),
        mpn: cfg.mpn,
        ..sinomar::gan::GeneratorConfig::default()
    };
    let d = sinomar::gan::DiscriminatorConfig {
        channels: cfg.disc_channels.clone(),
        ..sinomar::gan::DiscriminatorConfig::default()
    };
    (g, d)
}

fn cmd_simulate(common: &Common) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let dataset = build_dataset(&cfg, common.seed)?;
    let ds_dir = common.out.join("dataset");
    save_dataset(&dataset, &ds_dir)?;
    write_library(&common.out.join("masks"), &builtin_library(cfg.image_size * 2 / 5))?;
    write_atomic(&common.out.join("config.txt"), cfg.to_config_string().as_bytes())?;
    println!(
        "dataset: {} training samples, {} test cases -> {}",
        dataset.train.len(),
        dataset.test.len(),
        ds_dir.display()
    );
    Ok(())
}

fn cmd_train_pc(common: &Common) -> Result<(), Error> {
    let dataset = load_dataset(&common.out.join("dataset"))?;
    let cfg = &dataset.config;
    let (g_cfg, d_cfg) = gan_configs(cfg);
    let hyper = hyper_of(cfg, cfg.iters_pc, common.seed);
    let model_dir = common.out.join("models").join("pc");
    let out = train_pc(&dataset.train, &g_cfg, &d_cfg, &hyper, dataset.norm, Some(&model_dir))?;
    out.bundle.save(&model_dir)?;
    write_atomic(&model_dir.join("curves.csv"), curves_to_csv(&out.curves).as_bytes())?;
    let last = out.curves.last();
    println!(
        "pc model: {} iterations, final content loss {:.5} -> {}",
        out.bundle.iterations,
        last.map(|c| c.loss_g_content).unwrap_or(f64::NAN),
        model_dir.display()
    );
    Ok(())
}

fn cmd_train_sc(common: &Common) -> Result<(), Error> {
    let dataset = load_dataset(&common.out.join("dataset"))?;
    let cfg = &dataset.config;
    let pc = ModelBundle::load(&common.out.join("models").join("pc"))?;
    let sc_samples = sc_dataset_from_pc(&dataset.train, &pc)?;
    let (g_cfg, d_cfg) = gan_configs(cfg);
    let hyper = hyper_of(cfg, cfg.iters_sc, common.seed.wrapping_add(1));
    let model_dir = common.out.join("models").join("sc");
    let out = train_sc(&sc_samples, &g_cfg, &d_cfg, &hyper, dataset.norm, Some(&model_dir))?;
    out.bundle.save(&model_dir)?;
    write_atomic(&model_dir.join("curves.csv"), curves_to_csv(&out.curves).as_bytes())?;
    println!("sc model: {} iterations -> {}", out.bundle.iterations, model_dir.display());
    Ok(())
}

fn load_models(out: &Path) -> (Option<ModelBundle>, Option<ModelBundle>) {
    let pc = ModelBundle::load(&out.join("models").join("pc")).ok();
    let sc = ModelBundle::load(&out.join("models").join("sc")).ok();
    (pc, sc)
}

fn cmd_eval(common: &Common, methods: Option<&str>, report_name: &str) -> Result<(), Error> {
    let mut dataset = load_dataset(&common.out.join("dataset"))?;
    if let Some(m) = methods {
        dataset.config.methods = parse_methods(m)?;
    }
    let (pc, sc) = load_models(&common.out);
    let models = Models { pc: pc.as_ref(), sc: sc.as_ref() };
    let report_dir = common.out.join(report_name);
    let report = run_experiment(&dataset, &models, &report_dir)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", std::fs::read_to_string(report_dir.join("summary.txt"))?.trim_end());
    println!("report -> {}", report_dir.display());
    Ok(())
}

fn cmd_gradcheck() -> Result<(), Error> {
    let mut all_ok = true;
    for check in sinomar::gradcheck::run_suite()? {
        let status = if check.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status}  {:32} max rel err {:>12.3e}  (tolerance {:.0e})",
            check.name, check.max_rel_err, check.tolerance
        );
        all_ok &= check.passed();
    }
    if !all_ok {
        return Err(Error::numeric("gradient checks failed"));
    }
    Ok(())
}

fn run() -> Result<(), Error> {
    match Cli::parse().command {
        Command::Simulate(common) => cmd_simulate(&common),
        Command::TrainPc(common) => cmd_train_pc(&common),
        Command::TrainSc(common) => cmd_train_sc(&common),
        Command::Baseline { common, method } => {
            let methods = method.unwrap_or_else(|| "li,nmar".to_string());
            cmd_eval(&common, Some(&methods), "baseline")
        }
        Command::Eval { common, method } => cmd_eval(&common, method.as_deref(), "report"),
        Command::Gradcheck => cmd_gradcheck(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
