use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use slabmom::harness::{self, RunConfig};
use slabmom::selftest;

#[derive(Parser)]
#[command(name = "slabmom", version, about = "Minimum-entropy moment solvers for slab-geometry transport")]
struct Cli {
    /// Worker threads for cell-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write CSV output.
    Solve(SolveArgs),
    /// L1 / L∞ distance between two solution.csv files.
    Compare { a: PathBuf, b: PathBuf },
    /// Run the acceptance checks.
    Selftest {
        /// Include the long full-resolution check.
        #[arg(long)]
        slow: bool,
        #[arg(long, default_value_t = 20240611)]
        seed: u64,
    },
}

#[derive(Args)]
struct SolveArgs {
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// planesource | sourcebeam
    #[arg(long)]
    problem: Option<String>,
    /// m<N> | hfm<n> | pmm<n>
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    tf: Option<f64>,
    /// standard | transformed
    #[arg(long)]
    scheme: Option<String>,
    /// Fixed step size (transformed: disables adaptivity).
    #[arg(long, conflicts_with = "dt_cfl")]
    dt: Option<f64>,
    /// Standard scheme at the realizability-preserving step.
    #[arg(long)]
    dt_cfl: bool,
    /// Adaptive tolerance of the transformed scheme.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    relaxed: bool,
    #[arg(long)]
    hessian_reg: Option<f64>,
    #[arg(long)]
    hf_clip: bool,
    #[arg(long)]
    masslumping: bool,
    /// Optimizer gradient tolerance.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_newton_iter: Option<usize>,
    #[arg(long)]
    rho_vac: Option<f64>,
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SolveArgs {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::default(),
        };
        let mut set = |key: &str, value: String| config.set(key, &value);
        let pairs: Vec<(&str, Option<String>)> = vec![
            ("problem", self.problem),
            ("basis", self.basis),
            ("nx", self.nx.map(|v| v.to_string())),
            ("tf", self.tf.map(|v| v.to_string())),
            ("scheme", self.scheme),
            ("dt", self.dt.map(|v| v.to_string())),
            ("dt-cfl", self.dt_cfl.then(|| "true".into())),
            ("tol", self.tol.map(|v| v.to_string())),
            ("relaxed", self.relaxed.then(|| "true".into())),
            ("hessian-reg", self.hessian_reg.map(|v| v.to_string())),
            ("hf-clip", self.hf_clip.then(|| "true".into())),
            ("masslumping", self.masslumping.then(|| "true".into())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("max-newton-iter", self.max_newton_iter.map(|v| v.to_string())),
            ("rho-vac", self.rho_vac.map(|v| v.to_string())),
            ("no-cache", self.no_cache.then(|| "true".into())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                set(key, v)?;
            }
        }
        if let Some(dir) = self.out_dir {
            config.out_dir = Some(dir);
        }
        if config.out_dir.is_none() {
            config.out_dir = Some(PathBuf::from("."));
        }
        Ok(config)
    }
}

// Output lines are best effort: a closed pipe (`| head`) is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(io::stdout(), $($arg)*);
    }};
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Solve(args) => {
            let config = args.into_config()?;
            let record = harness::run(&config)?;
            let dir = config.out_dir.as_deref().unwrap();
            out!(
                "{} {} {} n_x={}: {} steps in {:.3} s, output in {}",
                config.scheme,
                config.problem,
                config.basis,
                config.n_x,
                record.n_t(),
                record.wall_s,
                dir.display()
            );
            if let Some(err) = record.entropy_error() {
                out!("cumulative entropy error {err:.3e}");
            }
        }
        Command::Compare { a, b } => {
            let sa = harness::read_solution(&a)?;
            let sb = harness::read_solution(&b)?;
            let (l1, linf) = harness::compare(&sa, &sb)?;
            out!("L1 {l1:.16e}");
            out!("Linf {linf:.16e}");
        }
        Command::Selftest { slow, seed } => {
            let outcomes = selftest::run_all(&selftest::SelftestOptions { slow, seed }, |o| out!("{o}"));
            let failed = outcomes.iter().filter(|o| o.status == selftest::Status::Fail).count();
            out!("{} checks, {failed} failed", outcomes.len());
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
