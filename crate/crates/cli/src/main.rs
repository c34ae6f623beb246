//! phaselock: experiment runner for quantum-limited optical phase tracking.
//!
//! Subcommands:
//!   run <config> [--out DIR] [--seed N] [--trials N] [--assert]
//!   check <config>
//!   sweep <config> --param NAME --values v1,v2,... [--out DIR] [--assert]
//!
//! Exit codes: 0 success, 1 config error, 2 runtime error, 3 acceptance-target
//! miss when --assert is passed. PHASELOCK_THREADS caps Monte Carlo
//! parallelism (0 or unset = automatic).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use phaselock_cli::config::{parse_config, ExperimentConfig, ExperimentKind};
use phaselock_cli::experiments::{self, run_experiment, ExperimentOutput, RunError};
use phaselock_cli::table;

const USAGE: &str = "usage:
  phaselock run <config> [--out DIR] [--seed N] [--trials N] [--assert]
  phaselock check <config>
  phaselock sweep <config> --param NAME --values v1,v2,... [--out DIR] [--assert]";

struct CliArgs {
    command: String,
    config_path: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    trials: Option<usize>,
    assert_targets: bool,
    param: Option<String>,
    values: Option<Vec<f64>>,
}

fn parse_args(mut args: impl Iterator<Item = String>) -> Result<CliArgs, String> {
    let command = args.next().ok_or(USAGE)?;
    if !["run", "check", "sweep"].contains(&command.as_str()) {
        return Err(format!("unknown subcommand '{command}'\n{USAGE}"));
    }
    let config_path = PathBuf::from(args.next().ok_or("missing config path")?);
    let mut out = None;
    let mut seed = None;
    let mut trials = None;
    let mut assert_targets = false;
    let mut param = None;
    let mut values = None;
    while let Some(flag) = args.next() {
        match flag.as_str() {
            "--out" => out = Some(PathBuf::from(args.next().ok_or("--out needs a directory")?)),
            "--seed" => {
                let v = args.next().ok_or("--seed needs a value")?;
                seed = Some(v.parse().map_err(|_| format!("bad --seed '{v}'"))?);
            }
            "--trials" => {
                let v = args.next().ok_or("--trials needs a value")?;
                trials = Some(v.parse().map_err(|_| format!("bad --trials '{v}'"))?);
            }
            "--assert" => assert_targets = true,
            "--param" => param = Some(args.next().ok_or("--param needs a name")?),
            "--values" => {
                let list = args.next().ok_or("--values needs a comma list")?;
                let parsed: Result<Vec<f64>, _> =
                    list.split(',').map(|s| s.trim().parse::<f64>()).collect();
                values = Some(parsed.map_err(|_| format!("bad --values '{list}'"))?);
            }
            other => return Err(format!("unknown flag '{other}'\n{USAGE}")),
        }
    }
    Ok(CliArgs { command, config_path, out, seed, trials, assert_targets, param, values })
}

fn configure_thread_pool() {
    if let Ok(raw) = std::env::var("PHASELOCK_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(0) => {}
            Ok(n) => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Err(_) => eprintln!("warning: ignoring unparsable PHASELOCK_THREADS='{raw}'"),
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_config(&text).map_err(|errs| {
        let mut msg = format!("{} config error(s) in {}:", errs.len(), path.display());
        for err in errs {
            msg.push_str(&format!("\n  {err}"));
        }
        msg
    })
}

fn attach_metadata(table: &mut table::ResultTable, cfg: &ExperimentConfig) {
    table.add_metadata("phaselock-version", env!("CARGO_PKG_VERSION"));
    table.add_metadata("generated-by", "phaselock");
    table.add_metadata("master_seed", &cfg.master_seed.to_string());
    table.add_metadata("config-begin", "");
    for line in cfg.echo().lines() {
        if let Some((key, value)) = line.split_once(" = ") {
            table.add_metadata(key, value);
        }
    }
    table.add_metadata("config-end", "");
}

fn write_outputs(
    output: &mut ExperimentOutput,
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<(), String> {
    let Some(dir) = out_dir else { return Ok(()) };
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let stem = cfg.kind.name();
    attach_metadata(&mut output.summary, cfg);
    let summary_path = dir.join(format!("{stem}-summary.csv"));
    output.summary.emit_csv(&summary_path)?;
    println!("wrote {}", summary_path.display());
    if let Some(trace) = &mut output.trace {
        attach_metadata(trace, cfg);
        let trace_path = dir.join(format!("{stem}-trace.csv"));
        trace.emit_csv(&trace_path)?;
        println!("wrote {}", trace_path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match parse_args(std::env::args().skip(1)) {
        Ok(args) => args,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(1);
        }
    };
    configure_thread_pool();

    let mut cfg = match load_config(&args.config_path) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(1);
        }
    };

    if args.command == "check" {
        println!("config ok: experiment = {}", cfg.kind.name());
        return ExitCode::SUCCESS;
    }

    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if args.command == "sweep" {
        let (Some(param), Some(values)) = (args.param.clone(), args.values.clone()) else {
            eprintln!("sweep needs --param and --values\n{USAGE}");
            return ExitCode::from(1);
        };
        if cfg.kind != ExperimentKind::Sweep {
            cfg.sweep_experiment = Some(cfg.kind);
            cfg.kind = ExperimentKind::Sweep;
        }
        cfg.sweep_param = Some(param);
        cfg.sweep_values = values;
    }

    let mut output = match run_experiment(&cfg) {
        Ok(output) => output,
        Err(RunError::Config(msg)) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(1);
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            return ExitCode::from(2);
        }
    };

    for line in &output.lines {
        println!("{line}");
    }

    let out_dir = args.out.clone().or_else(|| cfg.out.clone().map(PathBuf::from));
    if let Err(msg) = write_outputs(&mut output, &cfg, out_dir.as_deref()) {
        eprintln!("runtime error: {msg}");
        return ExitCode::from(2);
    }

    if args.assert_targets {
        let failed: Vec<&experiments::Check> =
            output.checks.iter().filter(|c| !c.pass).collect();
        if !failed.is_empty() {
            for check in failed {
                eprintln!("MISSED TARGET: {}", check.name);
            }
            return ExitCode::from(3);
        }
        println!("all {} acceptance targets met", output.checks.len());
    }
    ExitCode::SUCCESS
}
