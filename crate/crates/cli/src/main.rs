mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semgan::error::ErrorClass;
use semgan::masks::MaskKind;

use config::{Grid, ProtocolChoice, RunConfig};

#[derive(Debug, Args)]
struct Common {
    /// TOML config file (or a resolved config.json from an earlier run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_resolution)]
    resolution: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long, value_parser = parse_kind)]
    mask: Option<MaskKind>,
    /// Corrupted fraction for central and freehand masks.
    #[arg(long)]
    mask_fraction: Option<f64>,
    /// Mask PNG (white = known pixel); overrides --mask.
    #[arg(long)]
    mask_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InpaintArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Optimizer steps per image.
    #[arg(long)]
    iterations: Option<usize>,
    /// Perceptual loss weight.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a procedural face corpus in the training layout.
    Corpus {
        /// Number of faces.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Render semantic maps from landmark JSON files.
    Maps {
        /// A landmark JSON file or a directory of them.
        #[arg(long)]
        landmarks: PathBuf,
        /// Frame size `HxW` for files that do not record one.
        #[arg(long, value_parser = parse_frame)]
        frame: Option<(usize, usize)>,
    },
    /// Train the generator and discriminator on a dataset.
    Train {
        /// Dataset root with `images/` and `landmarks/` (or `maps/`).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Write a grid of generated faces.
    Sample {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset whose maps are used; synthetic poses otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        grid: Option<Grid>,
        /// Number of maps (rows).
        #[arg(long)]
        n: Option<usize>,
        /// Number of latents per row.
        #[arg(long)]
        cols: Option<usize>,
    },
    /// Inpaint one image.
    Inpaint {
        #[command(flatten)]
        model: InpaintArgs,
        #[command(flatten)]
        mask: MaskArgs,
        /// Source PNG at the checkpoint resolution.
        #[arg(long)]
        image: PathBuf,
        /// Landmark JSON or semantic-map PNG for the image.
        #[arg(long)]
        map: PathBuf,
    },
    /// Inpaint an N-frame pseudo-sequence built from one image.
    InpaintSeq {
        #[command(flatten)]
        model: InpaintArgs,
        #[command(flatten)]
        mask: MaskArgs,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Frames in the sequence.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run the correctness and/or consistency protocols over a dataset.
    Eval {
        #[command(flatten)]
        model: InpaintArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Mask kinds, comma separated or repeated.
        #[arg(long, alias = "mask", value_parser = parse_kind, value_delimiter = ',')]
        kind: Vec<MaskKind>,
        /// Frames per pseudo-sequence.
        #[arg(long)]
        n: Option<usize>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolChoice>,
        /// Evaluate only the first LIMIT images.
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "semgan",
    version,
    about = "Semantic-map conditioned GAN inpainting"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn parse_resolution(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(r @ (32 | 64 | 128)) => Ok(r),
        _ => Err(format!("{s} is not one of 32, 64, 128")),
    }
}

fn parse_kind(s: &str) -> Result<MaskKind, String> {
    s.parse().map_err(|e: semgan::Error| e.to_string())
}

fn parse_frame(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| format!("expected HxW, got {s}"))?;
    Ok((
        h.parse().map_err(|_| format!("bad height in {s}"))?,
        w.parse().map_err(|_| format!("bad width in {s}"))?,
    ))
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

fn run(inv: Cli) -> semgan::Result<()> {
    let mut cfg = RunConfig::load(inv.common.config.as_deref())?;
    if let Some(s) = inv.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = inv.common.out {
        cfg.paths.out = o;
    }
    let resolution_flag = inv.common.resolution;
    if let Some(r) = resolution_flag {
        cfg.resolution = r;
    }
    match inv.command {
        Command::Corpus { n } => {
            if let Some(n) = n {
                cfg.corpus.n = n;
            }
            commands::corpus(&cfg)
        }
        Command::Maps { landmarks, frame } => commands::maps(&cfg, &landmarks, frame),
        Command::Train {
            data,
            iterations,
            batch_size,
        } => {
            set(&mut cfg.paths.data, data.map(Some));
            set(&mut cfg.train.iterations, iterations);
            set(&mut cfg.train.batch_size, batch_size);
            commands::train(&cfg)
        }
        Command::Sample {
            checkpoint,
            data,
            grid,
            n,
            cols,
        } => {
            set(&mut cfg.paths.checkpoint, checkpoint.map(Some));
            set(&mut cfg.paths.data, data.map(Some));
            set(&mut cfg.sample.grid, grid);
            set(&mut cfg.sample.rows, n);
            set(&mut cfg.sample.cols, cols);
            commands::sample(&mut cfg, resolution_flag)
        }
        Command::Inpaint {
            model,
            mask,
            image,
            map,
        } => {
            apply_inpaint(&mut cfg, model);
            apply_mask(&mut cfg, mask);
            commands::inpaint(&mut cfg, resolution_flag, &image, &map)
        }
        Command::InpaintSeq {
            model,
            mask,
            image,
            map,
            n,
        } => {
            apply_inpaint(&mut cfg, model);
            apply_mask(&mut cfg, mask);
            set(&mut cfg.eval.n, n);
            commands::inpaint_seq(&mut cfg, resolution_flag, &image, &map)
        }
        Command::Eval {
            model,
            data,
            kind,
            n,
            jobs,
            protocol,
            limit,
        } => {
            apply_inpaint(&mut cfg, model);
            set(&mut cfg.paths.data, data.map(Some));
            if !kind.is_empty() {
                cfg.eval.kinds = kind;
            }
            set(&mut cfg.eval.n, n);
            set(&mut cfg.eval.jobs, jobs);
            set(&mut cfg.eval.protocol, protocol);
            set(&mut cfg.eval.limit, limit.map(Some));
            commands::eval(&mut cfg, resolution_flag)
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_inpaint(cfg: &mut RunConfig, a: InpaintArgs) {
    set(&mut cfg.paths.checkpoint, a.checkpoint.map(Some));
    set(&mut cfg.inpaint.iterations, a.iterations);
    set(&mut cfg.inpaint.eta, a.eta);
    set(&mut cfg.inpaint.restarts, a.restarts);
}

fn apply_mask(cfg: &mut RunConfig, a: MaskArgs) {
    set(&mut cfg.mask.kind, a.mask);
    set(&mut cfg.mask.fraction, a.mask_fraction.map(Some));
    set(&mut cfg.mask.file, a.mask_file.map(Some));
}
