#![forbid(unsafe_code)]
//! Batch front-end for the point-interaction ionization laboratory.
//!
//! ```text
//! ionize3d <subcommand> --config <file> [--out <dir>] [--set key=value]...
//! ```
//!
//! Subcommands: classify | genericity | solve | survival | modes | branchfit
//! | decayfit | full. The exit code of `full` is 0 iff every acceptance flag
//! in scope passes.

mod config;
mod csv;
mod pipeline;
mod report;

use config::{apply_override, Config};
use pipeline::Pipeline;
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str =
    "usage: ionize3d <classify|genericity|solve|survival|modes|branchfit|decayfit|full> \
--config <file> [--out <dir>] [--set key=value]...

The only environment variable consulted is IONIZE3D_THREADS (worker count).";

struct Args {
    subcommand: String,
    config_path: PathBuf,
    out_dir: Option<PathBuf>,
    overrides: Vec<(String, String)>,
}

fn parse_args() -> Result<Args, String> {
    let mut argv = std::env::args().skip(1);
    let subcommand = argv.next().ok_or(USAGE)?;
    if subcommand == "--help" || subcommand == "-h" || subcommand == "help" {
        return Err(USAGE.to_string());
    }
    let mut config_path = None;
    let mut out_dir = None;
    let mut overrides = Vec::new();
    while let Some(arg) = argv.next() {
        match arg.as_str() {
            "--config" => {
                config_path = Some(PathBuf::from(argv.next().ok_or("--config needs a path")?))
            }
            "--out" => out_dir = Some(PathBuf::from(argv.next().ok_or("--out needs a path")?)),
            "--set" => {
                let kv = argv.next().ok_or("--set needs key=value")?;
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| format!("--set expects key=value, got `{kv}`"))?;
                overrides.push((k.to_string(), v.to_string()));
            }
            other => return Err(format!("unknown argument `{other}`\n{USAGE}")),
        }
    }
    Ok(Args {
        subcommand,
        config_path: config_path.ok_or("--config is required")?,
        out_dir,
        overrides,
    })
}

fn load_config(args: &Args) -> Result<(Config, serde_json::Value), String> {
    let text = std::fs::read_to_string(&args.config_path)
        .map_err(|e| format!("cannot read {}: {e}", args.config_path.display()))?;
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("config is not valid JSON: {e}"))?;
    for (k, v) in &args.overrides {
        apply_override(&mut doc, k, v)?;
    }
    let config: Config =
        serde_json::from_value(doc).map_err(|e| format!("config does not fit the schema: {e}"))?;
    config.validate()?;
    // echo with defaults materialized
    let resolved = serde_json::to_value(&config).map_err(|e| e.to_string())?;
    Ok((config, resolved))
}

fn run() -> Result<bool, String> {
    let args = parse_args()?;
    let (config, resolved) = load_config(&args)?;
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.outputs.dir));
    let mut pipe = Pipeline::new(config, resolved, &out_dir)?;

    match args.subcommand.as_str() {
        "classify" => pipe.run_classify(),
        "genericity" => pipe.run_genericity(),
        "solve" => pipe.run_solve(),
        "survival" => {
            pipe.run_classify();
            pipe.run_solve();
            pipe.run_survival_and_fits();
            pipe.finish_flags();
        }
        "modes" => {
            pipe.run_classify();
            pipe.run_modes();
        }
        "branchfit" => {
            pipe.run_classify();
            pipe.run_branchfit();
        }
        "decayfit" => {
            pipe.run_classify();
            pipe.run_solve();
            pipe.run_survival_and_fits();
            pipe.run_ball();
            pipe.finish_flags();
        }
        "full" => pipe.run_full(),
        other => return Err(format!("unknown subcommand `{other}`\n{USAGE}")),
    }

    let report_name = format!("{}_report.json", args.subcommand);
    let path = pipe.write_report(&report_name)?;
    eprintln!("report written to {}", path.display());
    for (name, flag) in &pipe.report.acceptance {
        eprintln!(
            "  {}: {} (value {:.3e}, threshold {:.3e})",
            name,
            if flag.pass { "PASS" } else { "FAIL" },
            flag.value,
            flag.threshold
        );
    }
    for (stage, err) in &pipe.report.stage_errors {
        eprintln!("  stage {stage} failed: {err}");
    }
    Ok(pipe.report.all_flags_pass())
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
