use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relsync_core::harness::{
    delta_file_name, fuzz, load_scenario, replay_server, run_scenario, FuzzBounds, FuzzConfig, Mode,
};
use relsync_core::path::{evaluate, Binding, PathExpr, TypedGraph};

/// Simulate and fuzz relevance-filtered sync between a server and replicas.
#[derive(Parser)]
#[command(name = "relsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "both", value_parser = parse_mode)]
        mode: Mode,
        /// Write every delivered delta into this directory.
        #[arg(long)]
        dump_deltas: Option<PathBuf>,
    },
    /// Generate and run random scenarios on the social-event schema.
    Fuzz {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        iterations: usize,
        #[arg(long, default_value_t = FuzzBounds::default().max_objects)]
        max_objects: usize,
        /// Directory for replayable dumps of failing scenarios.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the path set of an expression over a scenario's final server data.
    EvalPaths {
        file: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        expr: String,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

/// Exit codes: 0 converged, 1 divergence, 2 usage, parse or step failure.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            file,
            mode,
            dump_deltas,
        } => cmd_run(file, mode, dump_deltas),
        Command::Fuzz {
            seed,
            iterations,
            max_objects,
            out,
        } => cmd_fuzz(seed, iterations, max_objects, out),
        Command::EvalPaths { file, user, expr } => cmd_eval_paths(file, &user, &expr),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(file: PathBuf, mode: Mode, dump: Option<PathBuf>) -> Result<bool, String> {
    let scenario = load_scenario(&file).map_err(|e| e.to_string())?;
    let out = run_scenario(&scenario, mode).map_err(|e| e.to_string())?;
    if let Some(dir) = dump {
        std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for d in &out.deltas {
            let path = dir.join(delta_file_name(d));
            std::fs::write(&path, d.delta.render())
                .map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    for (step, client, w) in &out.warnings {
        println!("warning: step {step} client {client}: {w:?}");
    }
    for r in &out.reports {
        print!("{r}");
    }
    if out.converged() {
        println!(
            "converged: {} steps, {} deltas",
            scenario.steps.len(),
            out.deltas.len()
        );
    } else {
        println!("diverged: {} reports", out.reports.len());
    }
    Ok(out.converged())
}

fn cmd_fuzz(
    seed: u64,
    iterations: usize,
    max_objects: usize,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    if max_objects == 0 || iterations == 0 {
        return Err("--iterations and --max-objects must be positive".into());
    }
    let config = FuzzConfig {
        bounds: FuzzBounds {
            max_objects,
            ..FuzzBounds::default()
        },
        ..FuzzConfig::new(seed, iterations)
    };
    let summary = fuzz(&config);
    for run in summary.failures() {
        let kinds: Vec<&str> = run.reports.iter().map(|r| r.kind.as_str()).collect();
        match &run.error {
            Some(e) => println!("iteration {}: error: {e}", run.iteration),
            None => println!("iteration {}: {}", run.iteration, kinds.join(", ")),
        }
    }
    if let Some(dir) = out {
        let written = summary
            .write_failures(&dir)
            .map_err(|e| format!("{}: {e}", dir.display()))?;
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    println!("{}", summary.line());
    Ok(summary.failure_count() == 0)
}

fn cmd_eval_paths(file: PathBuf, user: &str, expr: &str) -> Result<bool, String> {
    let scenario = load_scenario(&file).map_err(|e| e.to_string())?;
    let expr = PathExpr::parse(expr).map_err(|e| format!("expression: {e}"))?;
    let store = replay_server(&scenario).map_err(|e| e.to_string())?;
    let g = TypedGraph::new(store.schema(), store.data());
    let paths = evaluate(&expr, &g, &Binding::user(user.into())).map_err(|e| e.to_string())?;
    for p in &paths {
        println!("{p}");
    }
    Ok(true)
}
