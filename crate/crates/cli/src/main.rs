mod commands;
mod config;
mod manifest;

use clap::{Args, Parser, Subcommand};
use commands::Ctx;
use config::ExperimentConfig;
use manifest::Manifest;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "osgood-lab", version, about = "Osgood drift audits, weights and stochastic heat equation experiments")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Default)]
struct DriftArgs {
    /// ilog | linear | power | ulog | zero
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the drift assumptions
    Audit {
        #[command(flatten)]
        drift: DriftArgs,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Tabulate the dynamic weight and check the supersolution inequality
    Weight {
        #[command(flatten)]
        drift: DriftArgs,
        #[arg(long)]
        alpha: Option<f64>,
        /// gh | mc
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Sample the stochastic convolution
    Noise {
        #[arg(long)]
        paths: Option<usize>,
        /// white | riesz | exp-decay
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        covariance_paths: Option<usize>,
    },
    /// Solve the mild equation with the weighted monitor
    Solve {
        #[command(flatten)]
        drift: DriftArgs,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Count blow-up flags over many paths
    BlowupScan {
        #[command(flatten)]
        drift: DriftArgs,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Weighted distances between cutoff levels and time steps
    Uniq {
        #[command(flatten)]
        drift: DriftArgs,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        refinements: Option<usize>,
        #[arg(long)]
        c_lip: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Audit { .. } => "audit",
            Command::Weight { .. } => "weight",
            Command::Noise { .. } => "noise",
            Command::Solve { .. } => "solve",
            Command::BlowupScan { .. } => "blowup-scan",
            Command::Uniq { .. } => "uniq",
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_drift(cfg: &mut ExperimentConfig, d: DriftArgs) {
    set(&mut cfg.drift.family, d.family);
    set(&mut cfg.drift.n, d.n);
    set(&mut cfg.drift.lambda, d.lambda);
    set(&mut cfg.drift.delta, d.delta);
}

fn apply(cfg: &mut ExperimentConfig, cmd: Command) {
    match cmd {
        Command::Audit { drift, alpha } => {
            apply_drift(cfg, drift);
            if alpha.is_some() {
                cfg.audit.alpha = alpha;
            }
        }
        Command::Weight { drift, alpha, estimator } => {
            apply_drift(cfg, drift);
            set(&mut cfg.weight.alpha, alpha);
            set(&mut cfg.weight.estimator, estimator);
        }
        Command::Noise { paths, measure, sigma, covariance_paths } => {
            set(&mut cfg.noise.paths, paths);
            set(&mut cfg.noise.measure, measure);
            set(&mut cfg.noise.sigma, sigma);
            set(&mut cfg.noise.covariance_paths, covariance_paths);
        }
        Command::Solve { drift, paths, sigma, dt } => {
            apply_drift(cfg, drift);
            set(&mut cfg.solve.paths, paths);
            set(&mut cfg.solve.sigma, sigma);
            set(&mut cfg.solve.dt, dt);
        }
        Command::BlowupScan { drift, paths, sigma, dt } => {
            apply_drift(cfg, drift);
            set(&mut cfg.blowup_scan.paths, paths);
            set(&mut cfg.blowup_scan.sigma, sigma);
            set(&mut cfg.blowup_scan.dt, dt);
        }
        Command::Uniq { drift, level, refinements, c_lip } => {
            apply_drift(cfg, drift);
            set(&mut cfg.uniq.level, level);
            set(&mut cfg.uniq.refinements, refinements);
            if c_lip.is_some() {
                cfg.uniq.c_lip = c_lip;
            }
        }
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return 2;
        }
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return 2;
    }
    let name = cli.cmd.name();
    let loaded = match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    let seed = cli.seed.or(loaded.as_ref().ok().and_then(|c| c.seed)).unwrap_or(0);
    let (result, config, outputs) = match loaded {
        Ok(mut cfg) => {
            apply(&mut cfg, cli.cmd);
            cfg.seed = Some(seed);
            let config = serde_json::to_value(&cfg).unwrap_or(serde_json::Value::Null);
            let mut ctx = Ctx { out: cli.out.clone(), seed, cfg, outputs: Vec::new() };
            let r = match name {
                "audit" => commands::audit(&mut ctx),
                "weight" => commands::weight(&mut ctx),
                "noise" => commands::noise(&mut ctx),
                "solve" => commands::solve(&mut ctx),
                "blowup-scan" => commands::blowup_scan(&mut ctx),
                _ => commands::uniq(&mut ctx),
            };
            (r, config, ctx.outputs)
        }
        Err(e) => (Err(e), serde_json::Value::Null, Vec::new()),
    };
    let (status, code, message) = match &result {
        Ok(true) => ("pass", 0, None),
        Ok(false) => ("check-failed", 1, None),
        Err(e) => ("error", 2, Some(format!("{e:#}"))),
    };
    if let Some(m) = &message {
        eprintln!("error: {m}");
    }
    let m = Manifest {
        subcommand: name.to_string(),
        config_hash: manifest::config_hash(&config),
        seed,
        rng: manifest::RNG_DERIVATION,
        versions: manifest::versions(),
        config,
        outputs,
        status,
        exit_code: code,
        message,
    };
    if let Err(e) = manifest::write(&cli.out, &m) {
        eprintln!("error: cannot write manifest: {e}");
        return 2;
    }
    code
}
