//! Command-line pipeline for change point detection in the covariance
//! structure of fragmented functional data:
//! simulate -> (tune) -> segment -> refine -> infer -> evaluate.

mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use fragcp_core::error::Error;
use fragcp_core::experiment::{detect, evaluate};
use fragcp_core::simulate::generate;
use fragcp_core::tuning::{cross_validate, CvOptions, Method};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fragcp", version, about = "Change point detection for fragmented functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); falls back to FRAGCP_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Detection method override.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated confidence levels, e.g. "0.05,0.01".
    #[arg(long)]
    alpha: Option<String>,
    /// Limit-simulation mode override: step4 or step4prime.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the inference stage.
    #[arg(long = "no-infer")]
    no_infer: bool,
    /// Generic config override, repeatable: --set dotted.name=value.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from the configured scenario and write data.csv and
    /// truth.json.
    Simulate(Common),
    /// Run the detection pipeline on the configured data and write
    /// result.json.
    Detect(Common),
    /// Run seeded replicates of scenario + detection and write summary.json.
    Evaluate(Common),
    /// Cross-validate the tuning grid on the configured data and write
    /// cv.json.
    Cv(Common),
}

/// Exit code 2 for configuration problems, 3 for data problems.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::Parse { .. } | Error::Io(_) | Error::InsufficientData(_) => 3,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    for assignment in &common.set {
        cfg.apply_override(assignment)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = Some(threads);
    }
    if let Some(method) = &common.method {
        cfg.method = match method.to_ascii_lowercase().as_str() {
            "ffdp" => Method::Ffdp,
            "sbs" => Method::Sbs,
            other => {
                return Err(Error::InvalidArgument(format!("unknown method '{other}'")));
            }
        };
    }
    if let Some(alpha) = &common.alpha {
        cfg.inference.alphas = alpha
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad alpha '{a}'")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(mode) = &common.mode {
        cfg.inference.mode = match mode.to_ascii_lowercase().as_str() {
            "step4" => fragcp_core::inference::LimitMode::Step4,
            "step4prime" | "step4'" => fragcp_core::inference::LimitMode::Step4Prime,
            other => {
                return Err(Error::InvalidArgument(format!("unknown mode '{other}'")));
            }
        };
    }
    if common.no_infer {
        cfg.no_infer = true;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threads_for(cfg: &RunConfig) -> usize {
    cfg.threads
        .or_else(|| {
            std::env::var("FRAGCP_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Error> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<(), Error> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(), Error> {
    let spec = cfg.scenario()?;
    let (data, truth) = generate(&spec)?;
    let dir = out_dir(cfg)?;
    data.save_csv(dir.join("data.csv"))?;
    let truth_json = serde_json::json!({
        "change_points": truth.change_points,
        "spec": spec,
    });
    write_json(&dir.join("truth.json"), &truth_json)?;
    eprintln!(
        "wrote {} and {}",
        dir.join("data.csv").display(),
        dir.join("truth.json").display()
    );
    Ok(())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn cmd_detect(cfg: &RunConfig) -> Result<(), Error> {
    let data = cfg.load_data()?;
    let settings = cfg.detect_settings()?;
    let report = in_pool(threads_for(cfg), || detect(&data, &settings, cfg.seed))??;
    let dir = out_dir(cfg)?;
    if let Some(curves) = &report.scan_curves {
        let mut text = String::from("change_point,offset,score\n");
        for (l, curve) in curves.iter().enumerate() {
            for (i, v) in curve.iter().enumerate() {
                text.push_str(&format!("{},{},{}\n", l + 1, i, v));
            }
        }
        std::fs::write(dir.join("scan_curves.csv"), text)?;
    }
    write_json(&dir.join("result.json"), &report)?;
    eprintln!(
        "k_hat = {}, change points {:?}, refined {:?} ({:.1} ms)",
        report.k_hat, report.change_points, report.refined, report.timing_ms
    );
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<(), Error> {
    let spec = cfg.scenario()?;
    let settings = cfg.detect_settings()?;
    let started = std::time::Instant::now();
    let output = evaluate(&spec, &settings, cfg.reps, cfg.seed, threads_for(cfg))?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    let dir = out_dir(cfg)?;
    write_json(&dir.join("summary.json"), &output)?;
    eprintln!(
        "{} replicates in {:.0} ms: prop_exact {:.3}, hausdorff mean {:.4}",
        cfg.reps, elapsed_ms, output.summary.prop_exact, output.summary.hausdorff_mean
    );
    Ok(())
}

fn cmd_cv(cfg: &RunConfig) -> Result<(), Error> {
    let grid = cfg
        .grid
        .clone()
        .ok_or_else(|| Error::InvalidArgument("cv requires a tuning grid".into()))?;
    let data = cfg.load_data()?;
    let settings = cfg.detect_settings()?;
    let opts = CvOptions {
        fit: settings.fit.clone(),
        short_rule: settings.short_rule,
        c_k: settings.c_k,
    };
    let selection = in_pool(threads_for(cfg), || {
        cross_validate(&data, &grid, cfg.method, &opts)
    })??;
    let dir = out_dir(cfg)?;
    write_json(&dir.join("cv.json"), &selection)?;
    eprintln!(
        "selected lambda = {}, r = {}, xi_or_tau = {}",
        selection.lambda, selection.r, selection.xi_or_tau
    );
    Ok(())
}

type CommandFn = fn(&RunConfig) -> Result<(), Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, CommandFn) = match &cli.command {
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Detect(c) => (c, cmd_detect),
        Command::Evaluate(c) => (c, cmd_evaluate),
        Command::Cv(c) => (c, cmd_cv),
    };
    let cfg = match load_config(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
