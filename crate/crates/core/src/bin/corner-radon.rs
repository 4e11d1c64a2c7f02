use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use corner_radon::forward::BoundarySignal;
use corner_radon::harness::{
    compare_sinograms, invert_for, known_mask, oracle_for, run_experiment, synthesize_for, ExperimentConfig,
};
use corner_radon::radon_core::{reconstruct_fundamental_sinogram, symmetry_extend, Sinogram};

#[derive(Parser)]
#[command(name = "corner-radon", version, about = "Radon projections from wave data on corner-shaped surfaces")]
struct Cli {
    /// Preset name or path of a `key = value` config file.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; affects speed only.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Noise seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize boundary data and write boundary.txt.
    Synth,
    /// Reconstruct the fundamental sinogram from a boundary data file.
    ReconProj {
        #[arg(long)]
        data: PathBuf,
    },
    /// Exact projections of f_O on the config's grids.
    OracleProj,
    /// Extend a fundamental sinogram to all directions by symmetry.
    Extend {
        #[arg(long)]
        input: PathBuf,
    },
    /// Invert a full sinogram and restrict the image to the domain.
    Invert {
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare sinogram A against reference B over A's known cells.
    Compare { a: PathBuf, b: PathBuf },
    /// Run the whole pipeline for a preset or config file.
    Run { spec: String },
}

fn config(cli: &Cli, spec: Option<&str>) -> Result<ExperimentConfig> {
    let spec = spec
        .or(cli.config.as_deref())
        .context("stage config: no --config given (a preset name or a config file)")?;
    let mut cfg = ExperimentConfig::resolve(spec).context("stage config")?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("stage write: creating {}", cfg.out_dir.display()))?;
    Ok(&cfg.out_dir)
}

fn read_sinogram(path: &Path) -> Result<Sinogram> {
    Sinogram::read_csv(path).context("stage read")
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("stage config: --threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("stage config: thread pool")?;
    }
    match &cli.command {
        Command::Synth => {
            let cfg = config(&cli, None)?;
            let ph = cfg.load_phantom().context("stage phantom")?;
            let data = synthesize_for(&cfg, &ph)?;
            let p = out_dir(&cfg)?.join("boundary.txt");
            data.write(&p).context("stage write")?;
            println!("{}", p.display());
        }
        Command::ReconProj { data } => {
            let cfg = config(&cli, None)?;
            let signal = BoundarySignal::read(data, Some(cfg.geometry)).context("stage read")?;
            let s = reconstruct_fundamental_sinogram(
                &signal,
                cfg.fundamental_directions()?,
                cfg.fundamental_offsets()?,
                &cfg.reconstruction_options()?,
            )
            .context("stage reconstruct")?;
            let p = out_dir(&cfg)?.join("sinogram_fundamental.csv");
            s.write_csv(&p).context("stage write")?;
            println!("{}", p.display());
        }
        Command::OracleProj => {
            let cfg = config(&cli, None)?;
            let ph = cfg.load_phantom().context("stage phantom")?;
            let fund = oracle_for(&cfg, &ph).context("stage oracle")?;
            let full = symmetry_extend(&fund, &cfg.geometry).context("stage extend")?;
            let dir = out_dir(&cfg)?;
            for (name, s) in [("oracle_fundamental.csv", &fund), ("oracle.csv", &full)] {
                let p = dir.join(name);
                s.write_csv(&p).context("stage write")?;
                println!("{}", p.display());
            }
        }
        Command::Extend { input } => {
            let cfg = config(&cli, None)?;
            let full = symmetry_extend(&read_sinogram(input)?, &cfg.geometry).context("stage extend")?;
            let p = out_dir(&cfg)?.join("sinogram.csv");
            full.write_csv(&p).context("stage write")?;
            println!("{}", p.display());
        }
        Command::Invert { input } => {
            let mut cfg = config(&cli, None)?;
            if cfg.image_cells == 0 {
                cfg.image_cells = if cfg.geometry.dim() == 2 { 256 } else { 96 };
            }
            let img = invert_for(&cfg, &read_sinogram(input)?).context("stage invert")?;
            let dir = out_dir(&cfg)?;
            img.write_csv(&dir.join("image.csv")).context("stage write")?;
            for p in img.write_pgm(&dir.join("image.pgm")).context("stage write")? {
                println!("{}", p.display());
            }
        }
        Command::Compare { a, b } => {
            let (a, b) = (read_sinogram(a)?, read_sinogram(b)?);
            let (geom, band, dir) = match cli.config.as_deref() {
                Some(_) => {
                    let cfg = config(&cli, None)?;
                    (Some(cfg.geometry), cfg.band_deg, Some(out_dir(&cfg)?.to_path_buf()))
                }
                None => (None, 7.0, cli.out.clone()),
            };
            let report = compare_sinograms(&a, &b, &known_mask(&a), geom.as_ref(), band).context("stage compare")?;
            print!("{}", report.to_text());
            if let Some(dir) = dir {
                std::fs::create_dir_all(&dir).context("stage write")?;
                std::fs::write(dir.join("report.csv"), report.to_csv()).context("stage write")?;
                std::fs::write(dir.join("report.txt"), report.to_text()).context("stage write")?;
            }
        }
        Command::Run { spec } => {
            let cfg = config(&cli, Some(spec))?;
            let outcome = run_experiment(&cfg)?;
            print!("{}", outcome.report.to_text());
            println!("artifacts in {}", cfg.out_dir.display());
        }
    }
    Ok(())
}
