//! Command-line front end: run, sweep, validate and mesh-preview.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use esiwsim::config::{parse_config, RunConfig};
use esiwsim::runner;
use esiwsim::validation;

#[derive(Parser)]
#[command(name = "esiwsim", about = "FDTD simulation of ESIW-fed aperture-coupled patch antennas", version)]
struct Cli {
    /// Worker threads for the field updates (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Configuration file (TOML). Omit for the all-defaults run.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's output.dir).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Multiply all cell sizes (quick refinement studies).
    #[arg(long)]
    resolution_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the reference and total runs and write all artifacts.
    Run(CommonRunArgs),

    /// Run the built-in physics-oracle suite.
    Validate {
        /// Include the 50k-step late-time stability check.
        #[arg(long)]
        long: bool,
    },

    /// Repeat a run over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: CommonRunArgs,

        /// Dotted parameter path, e.g. geometry.x_s.
        #[arg(long)]
        param: String,

        /// Comma list (6.6,7.1,7.6) or range start:stop:step (6.6:8.6:0.5).
        #[arg(long)]
        values: String,
    },

    /// Voxelize only and export the material volume.
    MeshPreview(CommonRunArgs),
}

fn load_config(args: &CommonRunArgs) -> Result<(RunConfig, PathBuf), esiwsim::Error> {
    let (mut cfg, base) = match &args.config {
        Some(path) => {
            let doc = std::fs::read_to_string(path)?;
            let base = path.parent().map(PathBuf::from).unwrap_or_else(|| ".".into());
            (parse_config(&doc)?, base)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if let Some(s) = args.resolution_scale {
        cfg.mesh.resolution_scale = s;
        cfg.validate()?;
    }
    Ok((cfg, base))
}

fn out_dir(args: &CommonRunArgs, cfg: &RunConfig) -> PathBuf {
    args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn parse_values(spec: &str) -> Result<Vec<f64>, esiwsim::Error> {
    let bad = |m: &str| esiwsim::Error::Config(format!("--values: {m}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("range form is start:stop:step"));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|e| bad(&format!("{s}: {e}")));
        let (start, stop, step) = (p(parts[0])?, p(parts[1])?, p(parts[2])?);
        if step <= 0.0 || stop < start {
            return Err(bad("need stop >= start and step > 0"));
        }
        let mut v = Vec::new();
        let mut x = start;
        while x <= stop + 1e-9 * step {
            v.push(x);
            x += step;
        }
        Ok(v)
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(&format!("{s}: {e}"))))
            .collect()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode, esiwsim::Error> {
    match command {
        Command::Run(args) => {
            let (cfg, base) = load_config(&args)?;
            let out = out_dir(&args, &cfg);
            let result = runner::cmd_run(&cfg, &base, &out)?;
            let s = &result.summary;
            println!(
                "mode {}  cells {}  steps {}+{}  wall {:.1}s",
                s.mode, s.cells, s.steps_total, s.steps_reference, s.wall_secs
            );
            println!("S11 min {:.2} dB at {:.3} GHz", s.s11_min_db, s.f_min_ghz);
            match (s.band_lo_ghz, s.band_hi_ghz, s.fractional_bw_pct) {
                (Some(lo), Some(hi), Some(bw)) => {
                    println!("-10 dB band {lo:.2}-{hi:.2} GHz ({bw:.2} %)")
                }
                _ => println!("no -10 dB matched band"),
            }
            if let (Some(g), Some(e)) = (s.gain_dbi_at_f0, s.rad_eff_pct_at_f0) {
                println!("broadside realized gain {g:.2} dBi, radiation efficiency {e:.1} % at f0");
            }
            if !s.converged {
                println!("note: unconverged run; results are approximate");
            }
            println!("artifacts in {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { long } => {
            let checks = validation::run_all(long)?;
            let mut all_pass = true;
            for c in &checks {
                println!("{}", c.line());
                all_pass &= c.pass;
            }
            Ok(if all_pass {
                println!("all checks passed");
                ExitCode::SUCCESS
            } else {
                println!("validation FAILED");
                ExitCode::FAILURE
            })
        }
        Command::Sweep { common, param, values } => {
            let (cfg, base) = load_config(&common)?;
            let out = out_dir(&common, &cfg);
            let values = parse_values(&values)?;
            let rows = runner::cmd_sweep(&cfg, &base, &out, &param, &values)?;
            for r in &rows {
                println!(
                    "{} = {:<8} S11 min {:.2} dB at {:.3} GHz",
                    param, r.value, r.summary.s11_min_db, r.summary.f_min_ghz
                );
            }
            println!("combined table in {}", out.join("sweep.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::MeshPreview(args) => {
            let (cfg, base) = load_config(&args)?;
            let out = out_dir(&args, &cfg);
            let spec = runner::cmd_mesh_preview(&cfg, &base, &out)?;
            println!(
                "grid {} x {} x {} cells at ({}, {}, {}) mm -> {}",
                spec.nx,
                spec.ny,
                spec.nz,
                spec.dx,
                spec.dy,
                spec.dz,
                out.join("material_eps_r.bin").display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
