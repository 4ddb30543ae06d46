//! `declab run <config>`: runs one experiment and writes a results file plus
//! a manifest next to the requested prefix.

mod config;
mod experiments;
mod output;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{Finding, Format, Overrides};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "declab", version, about = "Decoherence and reduction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Check the config and report findings without running.
        #[arg(long)]
        validate: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix; files are `<PREFIX>.results.<ext>` and `<PREFIX>.manifest.json`.
        #[arg(long, value_name = "PREFIX")]
        out: Option<String>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long, env = "THREADS")]
        threads: Option<usize>,
    },
}

fn emit(record: serde_json::Value) {
    println!("{record}");
}

fn invalid(findings: &[Finding]) -> ExitCode {
    for f in findings {
        eprintln!("config error: {}: {}", f.field, f.message);
    }
    emit(json!({ "status": "invalid", "findings": findings }));
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            emit(json!({ "status": "error", "kind": "usage", "message": e.kind().to_string() }));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let Command::Run { config: path, validate, seed, out, format, threads } = cli.command;

    if let Some(n) = threads {
        if n == 0 {
            return invalid(&[Finding::new("threads", "must be at least 1")]);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already initialised: {e}");
        }
    }

    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return invalid(&[Finding::new("config", format!("cannot read {}: {e}", path.display()))]),
    };
    let overrides = Overrides { seed, output: out, format };
    let cfg = match config::parse(&text, &overrides) {
        Ok(c) => c,
        Err(findings) => return invalid(&findings),
    };
    let findings = validate::validate(&cfg);
    if !findings.is_empty() {
        return invalid(&findings);
    }
    if validate {
        emit(json!({ "status": "valid", "experiment": cfg.experiment.name() }));
        return ExitCode::SUCCESS;
    }

    eprintln!("running {} (seed {}, {} threads)", cfg.experiment.name(), cfg.seed, rayon::current_num_threads());
    let started = Instant::now();
    let (table, summary) = match experiments::run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("runtime error: {}: {}", e.invariant, e.message);
            emit(json!({ "status": "error", "kind": "runtime", "invariant": e.invariant, "message": e.message }));
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    eprintln!("finished in {:.1} s", started.elapsed().as_secs_f64());

    let paths = output::output_paths(&cfg.output, cfg.format);
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let results = table.render(cfg.format);
    let manifest = output::manifest(&cfg, &paths.results, &summary, created);
    if let Err(e) = output::write_atomically(&[(&paths.results, &results), (&paths.manifest, &manifest)]) {
        eprintln!("cannot write output: {e}");
        emit(json!({ "status": "error", "kind": "io", "message": e.to_string() }));
        return ExitCode::from(EXIT_RUNTIME);
    }
    emit(json!({
        "status": "ok",
        "experiment": cfg.experiment.name(),
        "results": paths.results,
        "manifest": paths.manifest,
        "summary": summary,
    }));
    ExitCode::SUCCESS
}
