//! The `isw` command-line tool.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{RunConfig, RESOLVED_CONFIG_FILE};

use crate::error::{Error, Result};
use crate::gradcheck::{random_feature_map, run_gradcheck, GradcheckOptions};
use crate::image::RgbImage;
use crate::io::{read_matrix_csv, write_mask_csv, write_matrix_csv, Heatmap};
use crate::linalg::CovarianceMatrix;
use crate::losses::conflict_probe;
use crate::pipeline::{
    evaluate_miou, generate_dataset, load_checkpoint, load_dataset, mean_abs_covariances,
    save_checkpoint, save_dataset, train, write_log_csv, DatasetManifest, SceneEntry, TrainVariant,
    SUPPRESSION_PROBE,
};
use crate::sensitivity::{
    derive_mask, run_sensitivity_pass, ClusterConfig, LayerSensitivity, SensitivityStats,
};

#[derive(Debug, Parser)]
#[command(name = "isw", version, about = "Instance selective whitening toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Baseline,
    Iw,
    Irw,
    Isw,
}

impl From<VariantArg> for TrainVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Baseline => TrainVariant::Baseline,
            VariantArg::Iw => TrainVariant::Iw,
            VariantArg::Irw => TrainVariant::Irw,
            VariantArg::Isw => TrainVariant::Isw,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        domain: Domain,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-phase training on the source dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `source_data` from the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Per-class IoU and mIoU of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sensitivity pass of a checkpoint: per-layer variance matrices and masks.
    Stats {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive a selection mask from a variance-matrix CSV.
    Mask {
        #[arg(long)]
        variance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Cluster raw variances instead of their log10.
        #[arg(long)]
        linear: bool,
    },
    /// Render a square CSV matrix as a PGM heatmap.
    Heatmap {
        #[arg(long = "matrix-csv")]
        matrix_csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: bool,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated channel counts.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4, 8, 16])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Skip the end-to-end network check.
        #[arg(long)]
        no_network: bool,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Descend DWT and IW losses from the same random map and compare the
    /// remaining off-diagonal covariance.
    Probe {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        /// Spatial side length.
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            config,
            domain,
            out,
        } => gen_data(config.as_deref(), domain, &out),
        Command::Train {
            config,
            variant,
            out,
            data,
        } => cmd_train(config.as_deref(), variant.into(), out, data),
        Command::Eval {
            checkpoint,
            data,
            out,
        } => cmd_eval(&checkpoint, &data, &out),
        Command::Stats {
            config,
            checkpoint,
            data,
            out,
        } => cmd_stats(config.as_deref(), &checkpoint, &data, &out),
        Command::Mask {
            variance,
            out,
            k,
            m,
            linear,
        } => cmd_mask(
            &variance,
            &out,
            ClusterConfig {
                k,
                m,
                log_scale: !linear,
            },
        ),
        Command::Heatmap {
            matrix_csv,
            out,
            log,
        } => {
            let m = read_matrix_csv(&matrix_csv)?;
            let map = Heatmap::from_matrix(m.dim, &m.values, log)?;
            map.write(&out)?;
            println!("mean off-diagonal intensity {}", map.mean_off_diagonal());
            Ok(())
        }
        Command::Gradcheck {
            seed,
            sizes,
            instances,
            no_network,
            corrupt_gradient,
        } => cmd_gradcheck(GradcheckOptions {
            seed,
            channels: sizes,
            instances,
            network: !no_network,
            corrupt: corrupt_gradient,
            ..GradcheckOptions::default()
        }),
        Command::Probe {
            seed,
            channels,
            size,
            steps,
            lr,
            out,
        } => {
            if channels == 0 || size == 0 {
                return Err(Error::InvalidInput(
                    "channels and size must be positive".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_feature_map(&mut rng, channels, size, size);
            let report = conflict_probe(&x, steps, lr)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializable")
            );
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            Ok(())
        }
    }
}

fn gen_data(config: Option<&Path>, domain: Domain, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let (style, n, seed, name) = match domain {
        Domain::Source => (
            &cfg.source_domain,
            cfg.num_source_scenes,
            cfg.source_seed,
            "source",
        ),
        Domain::Target => (
            &cfg.target_domain,
            cfg.num_target_scenes,
            cfg.target_seed,
            "target",
        ),
    };
    let scenes = generate_dataset(n, style, &cfg.scenes, seed)?;
    let manifest = DatasetManifest {
        domain: name.into(),
        num_scenes: n,
        height: cfg.scenes.height,
        width: cfg.scenes.width,
        num_classes: cfg.scenes.num_classes,
        seed,
        scenes: scenes
            .iter()
            .map(|s| SceneEntry {
                content_seed: s.content_seed,
                style: s.style,
            })
            .collect(),
    };
    save_dataset(out, &scenes, &manifest)?;
    cfg.echo(out)?;
    println!("wrote {n} {name} scenes to {}", out.display());
    Ok(())
}

fn layer_file(prefix: &str, layer: usize) -> String {
    format!("{prefix}_layer{}.csv", layer + 1)
}

fn write_sensitivity(out: &Path, layers: &[LayerSensitivity]) -> Result<Vec<String>> {
    let mut mask_files = Vec::new();
    for (l, s) in layers.iter().enumerate() {
        let v = s.stats.variance_matrix();
        write_matrix_csv(&out.join(layer_file("variance", l)), v.dim(), v.as_slice())?;
        let name = layer_file("mask", l);
        let mask = &s.derivation.mask;
        let mut full = vec![false; mask.dim() * mask.dim()];
        for (i, j) in mask.pairs() {
            full[i * mask.dim() + j] = true;
        }
        write_mask_csv(&out.join(&name), mask.dim(), &full)?;
        mask_files.push(name);
    }
    #[derive(Serialize)]
    struct LayerSummary<'a> {
        layer: usize,
        selected: usize,
        #[serde(flatten)]
        status: &'a crate::sensitivity::MaskStatus,
        threshold: Option<f64>,
        samples: usize,
    }
    let summary: Vec<LayerSummary> = layers
        .iter()
        .enumerate()
        .map(|(l, s)| LayerSummary {
            layer: l + 1,
            selected: s.derivation.mask.count(),
            status: &s.derivation.status,
            threshold: s.derivation.threshold,
            samples: s.stats.sample_count(),
        })
        .collect();
    write_json(&out.join("sensitivity.json"), &summary)?;
    Ok(mask_files)
}

fn cmd_train(
    config: Option<&Path>,
    variant: TrainVariant,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    cfg.train.loss_variant = variant;
    if let Some(d) = data {
        cfg.source_data = Some(d);
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o);
    }
    cfg.validate()?;
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory (--out or output_dir)".into()))?;
    let source = cfg
        .source_data
        .clone()
        .ok_or_else(|| Error::Config("no source dataset (--data or source_data)".into()))?;
    let (scenes, manifest) = load_dataset(&source)?;
    if manifest.num_classes > cfg.train.net.num_classes {
        return Err(Error::InvalidInput(format!(
            "dataset has {} classes, network {}",
            manifest.num_classes, cfg.train.net.num_classes
        )));
    }
    create_dir(&out)?;
    cfg.echo(&out)?;

    let result = train(&cfg.train, &scenes, &cfg.photometric, &cfg.cluster)?;
    let log_path = out.join("log.csv");
    let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    write_log_csv(std::io::BufWriter::new(file), &result.log)?;

    let mask_files = match &result.sensitivity {
        Some(layers) => write_sensitivity(&out, layers)?,
        None => Vec::new(),
    };
    save_checkpoint(&out, "model", &result.state, &mask_files)?;

    let probe: Vec<RgbImage> = scenes
        .iter()
        .take(SUPPRESSION_PROBE)
        .map(|s| s.image.clone())
        .collect();
    for (l, m) in mean_abs_covariances(&result.state.net, &probe)?
        .iter()
        .enumerate()
    {
        let c = cfg.train.net.widths[l];
        write_matrix_csv(&out.join(layer_file("cov", l)), c, m)?;
    }
    if let Some(s) = &result.suppression {
        write_json(&out.join("suppression.json"), s)?;
    }
    if let Some(target) = &cfg.target_data {
        let (tscenes, _) = load_dataset(target)?;
        let metrics = evaluate_miou(&result.state.net, &tscenes)?;
        write_json(&out.join("target_metrics.json"), &metrics)?;
        println!("target mIoU {}", metrics.miou);
    }
    println!(
        "trained {} for {} iterations ({} in phase 1); outputs in {}",
        variant.name(),
        result.log.len(),
        result.phase1_iterations,
        out.display()
    );
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let (net, _) = load_checkpoint(checkpoint)?;
    let (scenes, manifest) = load_dataset(data)?;
    if manifest.num_classes != net.config().num_classes {
        return Err(Error::InvalidInput(format!(
            "checkpoint predicts {} classes, dataset has {}",
            net.config().num_classes,
            manifest.num_classes
        )));
    }
    let metrics = evaluate_miou(&net, &scenes)?;
    write_json(out, &metrics)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics).expect("serializable")
    );
    Ok(())
}

fn cmd_stats(config: Option<&Path>, checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let (net, _) = load_checkpoint(checkpoint)?;
    let (scenes, _) = load_dataset(data)?;
    let images: Vec<RgbImage> = scenes.into_iter().map(|s| s.image).collect();
    let layers = run_sensitivity_pass(&net, &images, &cfg.photometric, &cfg.cluster)?;
    create_dir(out)?;
    cfg.echo(out)?;
    write_sensitivity(out, &layers)?;
    for (l, s) in layers.iter().enumerate() {
        println!(
            "layer {}: {} entries selected",
            l + 1,
            s.derivation.mask.count()
        );
    }
    Ok(())
}

fn cmd_mask(variance: &Path, out: &Path, cluster: ClusterConfig) -> Result<()> {
    cluster.validate()?;
    let m = read_matrix_csv(variance)?;
    let v = CovarianceMatrix::new(m.dim, m.values)?;
    let stats = SensitivityStats::from_variance(&v, 1)?;
    let d = derive_mask(&stats, &cluster)?;
    let mut full = vec![false; m.dim * m.dim];
    for (i, j) in d.mask.pairs() {
        full[i * m.dim + j] = true;
    }
    write_mask_csv(out, m.dim, &full)?;
    println!(
        "{} of {} entries selected ({:?})",
        d.mask.count(),
        m.dim * (m.dim.saturating_sub(1)) / 2,
        d.status
    );
    Ok(())
}

fn cmd_gradcheck(opts: GradcheckOptions) -> Result<()> {
    let report = run_gradcheck(&opts)?;
    for v in &report.variants {
        println!(
            "{:<14} instances {:>3} skipped {:>3} worst relative error {:.3e} (tol {:.0e}) {}",
            v.name,
            v.instances,
            v.skipped,
            v.worst_rel_error,
            v.tolerance,
            if v.passed { "ok" } else { "FAIL" }
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Verification("gradient check failed".into()))
    }
}
