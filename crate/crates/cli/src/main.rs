use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use rcs_cli::commands;
use rcs_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "rcs", version, about = "Oversampling with calibrated sub-classes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Class counts, threshold, partition and planned generation
    Inspect(Common),
    /// Balance a dataset and write the synthetic CSV plus a JSON report
    Oversample(Common),
    /// Train the autoencoder and write latent features
    Embed(Common),
    /// Stratified cross-validation of one method
    Evaluate(Common),
    /// Cross-validate several methods on identical folds
    Benchmark(Common),
    /// Finite-difference verification of the training gradients
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Perturb the analytic gradient (negative control)
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

#[derive(Args, Default)]
struct Common {
    /// Config file of `key = value` lines; `[command]` sections override the top level
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV
    #[arg(long)]
    data: Option<String>,
    /// Label column: index, header name or `last`
    #[arg(long)]
    label_col: Option<String>,
    /// The CSV has no header row
    #[arg(long)]
    no_header: bool,
    /// none | ros | smote | rcs
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated methods for `benchmark`
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// Calibration neighbors
    #[arg(long)]
    k: Option<String>,
    /// SMOTE neighbors
    #[arg(long)]
    smote_k: Option<String>,
    /// Contrastive temperature
    #[arg(long)]
    temp: Option<String>,
    #[arg(long)]
    latent_dim: Option<String>,
    /// Oversample in the autoencoder's latent space
    #[arg(long)]
    use_embedder: bool,
    /// Decode synthetic latents and classify in input space
    #[arg(long)]
    decode_synthetic: bool,
    #[arg(long)]
    embed_epochs: Option<String>,
    #[arg(long)]
    embed_lr: Option<String>,
    /// Hidden widths of the downstream classifier, comma-separated
    #[arg(long)]
    clf_hidden: Option<String>,
    #[arg(long)]
    clf_epochs: Option<String>,
    #[arg(long)]
    clf_lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    /// Master seed
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads (0 = all cores, 1 = serial)
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl Common {
    fn resolve(&self, section: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path, section)?;
        }
        let pairs = [
            ("data", &self.data),
            ("label_col", &self.label_col),
            ("method", &self.method),
            ("methods", &self.methods),
            ("eta", &self.eta),
            ("k", &self.k),
            ("smote_k", &self.smote_k),
            ("temp", &self.temp),
            ("latent_dim", &self.latent_dim),
            ("embed_epochs", &self.embed_epochs),
            ("embed_lr", &self.embed_lr),
            ("clf_hidden", &self.clf_hidden),
            ("clf_epochs", &self.clf_epochs),
            ("clf_lr", &self.clf_lr),
            ("batch_size", &self.batch_size),
            ("folds", &self.folds),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("out_dir", &self.out_dir),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.no_header {
            cfg.header = false;
        }
        if self.use_embedder {
            cfg.use_embedder = true;
        }
        if self.decode_synthetic {
            cfg.decode_synthetic = true;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Inspect(c) => {
            let cfg = c.resolve("inspect")?;
            let report = commands::inspect(&cfg)?;
            print!("{}", report.render());
            if c.out_dir.is_some() {
                commands::write_json(&cfg.out_dir.join("inspect.json"), &report)?;
            }
        }
        Command::Oversample(c) => {
            let cfg = c.resolve("oversample")?;
            let report = commands::oversample(&cfg)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            println!(
                "{}: {} -> {} rows (seed {}), written to {}",
                report.method,
                report.rows_in,
                report.rows_out,
                report.seed,
                cfg.out_dir.display()
            );
        }
        Command::Embed(c) => {
            let cfg = c.resolve("embed")?;
            let ckpt = commands::embed(&cfg)?;
            let last = ckpt.bundle.loss_trace.last().map_or(f64::NAN, |t| t.total);
            println!(
                "latent dim {}, final loss {last:.4} (seed {}), written to {}",
                ckpt.bundle.latent_dim,
                cfg.seed,
                cfg.out_dir.display()
            );
        }
        Command::Evaluate(c) => {
            let cfg = c.resolve("evaluate")?;
            let report = commands::evaluate(&cfg)?;
            for f in &report.per_fold {
                let m = &f.result.metrics;
                println!(
                    "fold {}: BACC {:.4}  MCC {:.4}  F1 {:.4}  Gmean {:.4}",
                    f.fold, m.bacc, m.mcc, m.f1_macro, m.gmean
                );
            }
            let a = &report.aggregate;
            println!(
                "{} (seed {}): BACC {:.4} ± {:.4}  MCC {:.4} ± {:.4}  F1 {:.4} ± {:.4}  Gmean {:.4} ± {:.4}",
                report.method,
                report.seed,
                a.bacc.mean,
                a.bacc.std,
                a.mcc.mean,
                a.mcc.std,
                a.f1_macro.mean,
                a.f1_macro.std,
                a.gmean.mean,
                a.gmean.std
            );
        }
        Command::Benchmark(c) => {
            let cfg = c.resolve("benchmark")?;
            let report = commands::benchmark(&cfg)?;
            println!("seed {}, {} folds", report.seed, report.folds);
            print!("{}", rcs_cli::pipeline::render_table(&report));
        }
        Command::Gradcheck { common, corrupt_gradient } => {
            let cfg = common.resolve("gradcheck")?;
            let summary = commands::gradcheck(&cfg, corrupt_gradient)?;
            print!("{}", summary.render());
            if common.out_dir.is_some() {
                commands::write_json(&cfg.out_dir.join("gradcheck.json"), &summary)?;
            }
            return Ok(summary.pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
