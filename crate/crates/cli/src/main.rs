use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optdes::runner::{load_config, run, write_error_report, RunError};
use optdes::{AppId, Overrides, RunConfig, Task};

/// Optimal approximate and exact experimental designs.
#[derive(Parser, Debug)]
#[command(name = "optdes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed for the annealing restarts.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Number of annealing restarts.
    #[arg(long, global = true)]
    restarts: Option<usize>,

    /// Run count for exact designs.
    #[arg(long, global = true)]
    n: Option<u32>,

    /// Worker threads (default: all available cores).
    #[arg(long, env = "OPTDES_THREADS", hide_env_values = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal approximate design on the candidate set.
    Approx,
    /// Approximate design followed by an annealed exact design with `n` runs.
    Exact,
    /// Maximin-efficiency design; exact when `n` is given.
    Maximin,
    /// Check a design against the equivalence theorem.
    Verify,
    /// Reproduce a published application.
    Preset {
        /// app1_case_i, app1_case_ii, app2, app3 or app4
        app: AppId,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("{}", RunError::Schema("OPTDES_THREADS must be at least 1".into()).to_json());
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("{{\"error\":\"other\",\"code\":1,\"message\":\"{e}\"}}");
            return ExitCode::from(1);
        }
    }
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        restarts: cli.restarts,
        n: cli.n,
    };
    let out_hint = cli.out.clone();
    match execute(&cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err((err, out)) => {
            if let Some(dir) = out.or(out_hint) {
                write_error_report(&dir, &err);
            }
            eprintln!("{}", err.to_json());
            ExitCode::from(err.code() as u8)
        }
    }
}

fn execute(cli: &Cli, overrides: &Overrides) -> Result<(), (RunError, Option<PathBuf>)> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(|e| (e, None))?,
        None => RunConfig::new(Task::Approx),
    };
    cfg.task = Some(match &cli.command {
        Command::Approx => Task::Approx,
        Command::Exact => Task::Exact,
        Command::Maximin if overrides.n.or(cfg.n).is_some() => Task::MaximinExact,
        Command::Maximin => Task::MaximinApprox,
        Command::Verify => Task::Verify,
        Command::Preset { app } => {
            cfg.app = Some(*app);
            Task::Preset
        }
    });
    cfg.apply(overrides);
    let out = cfg.out_dir();
    let summary = run(&cfg).map_err(|e| (e, Some(out)))?;
    let report = &summary.report;
    println!("report: {}", summary.out.join("report.json").display());
    if let Some(v) = report.get("verdict").and_then(|v| v.as_str()) {
        println!("verdict: {v}");
    }
    if let Some(rows) = report.get("comparison").and_then(|v| v.as_array()) {
        println!("{:<48} {:>12} {:>12}", "quantity", "obtained", "reported");
        for r in rows {
            let reported = r["reported"].as_f64().map(|x| format!("{x}")).unwrap_or_else(|| "-".into());
            println!(
                "{:<48} {:>12.4} {:>12}",
                r["quantity"].as_str().unwrap_or(""),
                r["obtained"].as_f64().unwrap_or(f64::NAN),
                reported
            );
        }
    }
    Ok(())
}
