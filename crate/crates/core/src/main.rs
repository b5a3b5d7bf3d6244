use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fpme::cli::{self, Command, RunConfig, EXIT_CONFIG};

/// Signed fractional porous medium flow on an interval.
#[derive(Parser)]
#[command(name = "fpme", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Lane-Emden ground state and first eigenvalue
    GroundState,
    /// Minimizing-movement evolution with its energy ledger
    Evolve,
    /// Selection criterion, evolution and stabilization verdict
    Selection,
    /// String method and interpolation-path profiles
    Landscape,
    /// Full invariant battery
    Check,
}

#[derive(Args)]
struct Flags {
    /// Flat `key = value` config file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Any config key, as KEY=VALUE (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    s: Option<String>,
    #[arg(long, global = true)]
    m: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    h: Option<String>,
    /// Time horizon
    #[arg(long = "T", global = true)]
    horizon: Option<String>,
    #[arg(long, global = true)]
    tol: Option<String>,
    #[arg(long, global = true)]
    window: Option<String>,
    #[arg(long, global = true)]
    n_images: Option<String>,
    #[arg(long, global = true)]
    max_iter: Option<String>,
    #[arg(long, global = true)]
    quad_order: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    output_dir: Option<String>,
    /// ground | minus_ground | bump_mix(amplitude, center, width) | random(seed, scale)
    #[arg(long, global = true, allow_hyphen_values = true)]
    datum: Option<String>,
    /// Initial datum as an `x,value` CSV
    #[arg(long, global = true)]
    file: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda2_est: Option<String>,
    /// Comma-separated snapshot times
    #[arg(long, global = true)]
    snapshots: Option<String>,
}

impl Flags {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let named = [
            ("a", &self.a),
            ("b", &self.b),
            ("n", &self.n),
            ("s", &self.s),
            ("m", &self.m),
            ("alpha", &self.alpha),
            ("h", &self.h),
            ("T", &self.horizon),
            ("tol", &self.tol),
            ("window", &self.window),
            ("n_images", &self.n_images),
            ("max_iter", &self.max_iter),
            ("quad_order", &self.quad_order),
            ("seed", &self.seed),
            ("output_dir", &self.output_dir),
            ("datum", &self.datum),
            ("file", &self.file),
            ("lambda2_est", &self.lambda2_est),
            ("snapshots", &self.snapshots),
        ];
        let mut out = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (key, value) in named {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        }
        Ok(out)
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(text) = std::env::var("FPME_THREADS") else {
        return Ok(());
    };
    let threads: usize = text
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("FPME_THREADS must be a positive integer, got `{text}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::GroundState => Command::GroundState,
        Cmd::Evolve => Command::Evolve,
        Cmd::Selection => Command::Selection,
        Cmd::Landscape => Command::Landscape,
        Cmd::Check => Command::Check,
    };
    let cfg = configure_threads()
        .and_then(|_| cli.flags.overrides())
        .and_then(|o| RunConfig::load(cli.flags.config.as_deref(), &o).map_err(|e| e.to_string()));
    let cfg = match cfg {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("fpme: {msg}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match cli::run(command, &cfg) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fpme: {e}");
            ExitCode::from(cli::exit_code_for(&e) as u8)
        }
    }
}
