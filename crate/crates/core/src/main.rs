use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgepop::sim::commands::{cmd_eval, cmd_generate, cmd_online, cmd_train, cmd_validate_theorem1, resolve_config};
use edgepop::sim::{ExperimentConfig, Method};

#[derive(Parser)]
#[command(
    name = "edgepop",
    version,
    about = "Federated LSTM auto-encoder popularity prediction simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; defaults to the one recorded in the dataset manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate request traces and write the dataset.
    Generate(Common),
    /// Train a method on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// urfl, fedlwa, selftrain, sdaefl, ddaefl or drael; defaults to the config scheme.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Replay the online slots with trained checkpoints.
    Online {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Compare the closed-form global popularity with sampled estimates.
    ValidateTheorem1 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        slots: usize,
    },
    /// Held-out RMSE of trained checkpoints.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<Method>,
    },
}

fn setup(common: &Common, need_manifest: bool) -> edgepop::Result<(ExperimentConfig, PathBuf)> {
    let fallback = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut cfg = match (&common.config, need_manifest) {
        (None, false) => ExperimentConfig::default(),
        (path, _) => resolve_config(path.as_deref(), &fallback)?,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn run(cli: Cli) -> edgepop::Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let (cfg, out) = setup(&common, false)?;
            let m = cmd_generate(&cfg, &out)?;
            println!("content_sha256 {}", m.content_sha256);
        }
        Command::Train { common, method } => {
            let (cfg, out) = setup(&common, true)?;
            let method = method.unwrap_or(Method::from_scheme(cfg.scheme));
            let outcome = cmd_train(&cfg, &out, method)?;
            println!(
                "{method}: rounds {} global_rmse {:?} mean_local_rmse {:?}",
                outcome.reports.len(),
                outcome.final_global_rmse(),
                outcome.final_local_rmse()
            );
        }
        Command::Online { common, method } => {
            let (cfg, out) = setup(&common, true)?;
            let method = method.unwrap_or(Method::from_scheme(cfg.scheme));
            let slots = cmd_online(&cfg, &out, method)?;
            let errors: Vec<f64> = slots.iter().flat_map(|s| s.all_errors()).collect();
            let below = errors.iter().filter(|&&e| e < 0.1).count();
            println!(
                "{method}: {} slots, {below}/{} absolute errors below 0.1",
                slots.len(),
                errors.len()
            );
        }
        Command::ValidateTheorem1 { seed, out, slots } => {
            for c in cmd_validate_theorem1(seed, slots, &out)? {
                println!("{}: max_abs_gap {:.6} rmse {:.6}", c.name, c.max_abs_gap, c.rmse);
            }
        }
        Command::Eval { common, method } => {
            let (cfg, out) = setup(&common, true)?;
            let method = method.unwrap_or(Method::from_scheme(cfg.scheme));
            for r in cmd_eval(&cfg, &out, method)? {
                let who = r.user_id.map_or("global".to_string(), |u| format!("user {u}"));
                println!("{method} {who}: rmse {:.6} uniform {:.6}", r.rmse, r.uniform_rmse);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
