use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use figsep::error::{Error, ErrorCategory, Result};
use figsep::evaluator::{evaluate, load_detections, load_groundtruth, recall_at};
use figsep::formats::write_detections;
use figsep::fusion::fuse;
use figsep::separator::{extract_crops, list_images, separate};
use figsep::side_loss::reference_report;
use figsep::simulator::{generate_dataset, synthetic_pools, ClassPools};
use figsep::ToolConfig;
use rayon::prelude::*;

/// Compound figure simulation, separation, fusion and evaluation.
#[derive(Parser)]
#[command(name = "figsep", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file (dotted keys such as `sim.gutter = 4`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override one configuration key, e.g. `--set sim.gutter=8`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a pseudo compound figure dataset.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        total: Option<usize>,
        #[arg(long)]
        intra: Option<usize>,
        /// Class map with `id name dir` lines; a procedural pool is used otherwise.
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Separate every image in a directory with whitespace cuts.
    Separate {
        images: PathBuf,
        /// Detection-results JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write crops of detections at or above `--conf-thr` here.
        #[arg(long)]
        crops: Option<PathBuf>,
        #[arg(long)]
        conf_thr: Option<f64>,
    },
    /// Score a detection-results file against ground truth.
    Evaluate {
        dets: PathBuf,
        /// Dataset directory (images/ + labels/) or ground-truth JSON.
        gt: PathBuf,
        /// Write the JSON report here as well as printing the table.
        #[arg(long)]
        out: Option<PathBuf>,
        /// IoU threshold of the reported recall.
        #[arg(long)]
        iou_thr: Option<f64>,
        #[arg(long)]
        class_agnostic: bool,
    },
    /// Fuse several detection-results files with weighted boxes fusion.
    Fuse {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iou_thr: Option<f64>,
    },
    /// Print side loss reference values and the loss weight table.
    SidelossCheck {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    DumpConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(global: &GlobalArgs) -> Result<ToolConfig> {
    let mut cfg = match &global.config {
        Some(path) => ToolConfig::load(path)?,
        None => ToolConfig::default(),
    };
    for o in &global.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Simulate {
            out,
            total,
            intra,
            pool,
        } => {
            if let Some(t) = total {
                // keep the configured intra share unless --intra says otherwise
                let (i0, t0) = (cfg.sim.intra_figures, cfg.sim.total_figures);
                cfg.sim.intra_figures = if t0 == 0 {
                    0
                } else {
                    (i0 as u128 * t as u128 / t0 as u128) as usize
                };
                cfg.sim.total_figures = t;
            }
            if let Some(i) = intra {
                cfg.sim.intra_figures = i;
            }
            cfg.validate()?;
            let pools = match pool {
                Some(map) => ClassPools::from_class_map(&map)?,
                None => synthetic_pools(4, 64, cfg.seed),
            };
            let m = generate_dataset(&cfg.sim, &pools, &out, cfg.seed)?;
            println!(
                "figures {} (multi {}, intra {}), rows {}, columns {}, subfigures {}",
                m.total_figures,
                m.multi_figures,
                m.intra_figures,
                m.row_figures,
                m.column_figures,
                m.total_subfigures
            );
            for (class, n) in &m.subfigures_by_class {
                println!(
                    "  {class}: {n} subfigures, {} intra figures",
                    m.intra_figures_by_class.get(class).unwrap_or(&0)
                );
            }
            println!("manifest: {}", out.join("manifest.json").display());
        }
        Command::Separate {
            images,
            out,
            crops,
            conf_thr,
        } => {
            if let Some(t) = conf_thr {
                cfg.extract.conf_thr = t;
                cfg.validate()?;
            }
            let conf_thr = cfg.extract.conf_thr;
            let files = list_images(&images)?;
            let results: Vec<(Vec<figsep::Detection>, usize)> = files
                .par_iter()
                .map(|f| {
                    let img = image::open(f)
                        .map_err(|source| Error::Image {
                            path: f.clone(),
                            source,
                        })?
                        .to_rgb8();
                    let id = f
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    let dets = separate(&img, &id, &cfg.cut);
                    let n_crops = match &crops {
                        Some(dir) => extract_crops(&img, &dets, conf_thr, dir)?.len(),
                        None => 0,
                    };
                    Ok((dets, n_crops))
                })
                .collect::<Result<_>>()?;
            let n_crops: usize = results.iter().map(|r| r.1).sum();
            let dets: Vec<_> = results.into_iter().flat_map(|r| r.0).collect();
            write_detections(&out, &dets)?;
            println!(
                "images {}  detections {}  crops {}",
                files.len(),
                dets.len(),
                n_crops
            );
        }
        Command::Evaluate {
            dets,
            gt,
            out,
            iou_thr,
            class_agnostic,
        } => {
            if class_agnostic {
                cfg.eval.class_agnostic = true;
            }
            if let Some(t) = iou_thr {
                cfg.eval.recall_iou_thr = t;
                cfg.validate()?;
            }
            let recall_thr = cfg.eval.recall_iou_thr;
            let detections = load_detections(&dets)?;
            let gts = load_groundtruth(&gt)?;
            let opts = cfg.eval.options();
            let report = evaluate(&detections, &gts, opts);
            print!("{}", report.to_table());
            match recall_at(&detections, &gts, recall_thr, opts) {
                Some(r) => println!("recall@{recall_thr}  {r:.4}"),
                None => println!("recall@{recall_thr}  n/a"),
            }
            if let Some(path) = out {
                let mut text =
                    serde_json::to_string_pretty(&report).map_err(|source| Error::Json {
                        path: path.clone(),
                        source,
                    })?;
                text.push('\n');
                write_text(&path, &text)?;
            }
        }
        Command::Fuse {
            inputs,
            out,
            iou_thr,
        } => {
            if let Some(t) = iou_thr {
                cfg.fusion.iou_thr = t;
                cfg.validate()?;
            }
            let per_model = inputs
                .iter()
                .map(|p| load_detections(p))
                .collect::<Result<Vec<_>>>()?;
            let fused = fuse(&per_model, &cfg.fusion)?;
            write_detections(&out, &fused)?;
            println!(
                "models {}  fused detections {}",
                per_model.len(),
                fused.len()
            );
        }
        Command::SidelossCheck { out } => {
            let report = reference_report();
            match out {
                Some(path) => write_text(&path, &report)?,
                None => print!("{report}"),
            }
        }
        Command::DumpConfig { out } => {
            let text = cfg.to_toml_string();
            match out {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("CFS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Parse => 3,
                ErrorCategory::Runtime => 4,
            })
        }
    }
}
