//! `cultiverse` admin and server command line.
//!
//! Exit status: 0 when the dataset has no violations, 1 when it has some,
//! 2 when it cannot be read at all or the server fails to start.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use cultiverse_core::analytics::co_occurrence;
use cultiverse_core::norm::category_census;
use cultiverse_core::dataset::DEFAULT_MIN_CONFIDENCE;
use cultiverse_core::{Dataset, ImportSummary, ValidationReport};
use serde_json::json;

use crate::api::{self, AppState, TOKEN_ENV};
use crate::files::{self, IngestError, RawDataset};
use crate::gateway::{Gateway, ProviderConfig};

#[derive(Debug, Parser)]
#[command(name = "cultiverse", version, about = "Cultural-norm dataset tools and HTTP service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a dataset, optionally writing a normalized copy.
    Ingest {
        root: PathBuf,
        /// Write the canonical form of the dataset here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        format: Format,
    },
    /// Validate a dataset and print the report.
    Validate {
        root: PathBuf,
        #[command(flatten)]
        format: Format,
    },
    /// Turn detector output into annotations and rewrite the paintings file.
    ImportDetections {
        root: PathBuf,
        file: PathBuf,
        /// JSON object mapping detector labels to element ids.
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_CONFIDENCE)]
        min_confidence: f64,
        /// Report what would be imported without writing anything.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        format: Format,
    },
    /// Print element frequencies and co-occurrence edges.
    Stats {
        root: PathBuf,
        #[command(flatten)]
        format: Format,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "CULTIVERSE_ROOT")]
        root: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Provider config file (JSON).
        #[arg(long, env = "CULTIVERSE_LLM_CONFIG")]
        llm: PathBuf,
        /// Event store directory.
        #[arg(long, env = api::STORE_ENV)]
        store: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct Format {
    /// Machine-readable output.
    #[arg(long)]
    pub json: bool,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { root, out, format } => ingest(&root, out.as_deref(), format),
        Command::Validate { root, format } => validate(&root, format),
        Command::ImportDetections { root, file, map, min_confidence, dry_run, format } => {
            import(&root, &file, &map, min_confidence, dry_run, format)
        }
        Command::Stats { root, format } => stats(&root, format),
        Command::Serve { root, port, host, llm, store } => serve(&root, &host, port, &llm, store),
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn status(report: &ValidationReport) -> ExitCode {
    if report.accepted() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn fail(err: &IngestError, format: Format) -> ExitCode {
    if let IngestError::ValidationFailed(report) = err {
        print_report(report, format);
        return ExitCode::from(1);
    }
    if format.json {
        print_json(&json!({ "error": { "kind": err.kind(), "message": err.to_string() } }));
    } else {
        eprintln!("error: {err}");
    }
    ExitCode::from(2)
}

fn print_report(report: &ValidationReport, format: Format) {
    if format.json {
        print_json(&json!({ "report": report }));
        return;
    }
    for (kind, n) in &report.counts {
        println!("{kind:<12} {n}");
    }
    println!("{:<12} {}", "violations", report.violations.len());
    println!("{:<12} {}", "warnings", report.warnings.len());
    for v in &report.violations {
        println!("  error   {v}");
    }
    for v in &report.warnings {
        println!("  warning {v}");
    }
}

fn load(root: &Path, format: Format) -> Result<Dataset, ExitCode> {
    files::load_dataset(root).map_err(|e| fail(&e, format))
}

fn validate(root: &Path, format: Format) -> ExitCode {
    match load(root, format) {
        Ok(ds) => {
            let report = ds.acceptance_report();
            print_report(&report, format);
            status(&report)
        }
        Err(code) => code,
    }
}

fn ingest(root: &Path, out: Option<&Path>, format: Format) -> ExitCode {
    let raw = match RawDataset::read(root) {
        Ok(r) => r,
        Err(e) => return fail(&e, format),
    };
    let ds = match raw.assemble() {
        Ok(ds) => ds,
        Err(report) => return fail(&IngestError::ValidationFailed(report), format),
    };
    let report = ds.acceptance_report();
    let census = category_census(&ds.elements);
    let reference = ds.manifest.reference_corpus.as_ref();
    if let Some(dir) = out {
        if let Err(e) = files::save_dataset(&ds, dir) {
            return fail(&e, format);
        }
    }
    if format.json {
        print_json(&json!({
            "report": report,
            "census": census,
            "reference_corpus": reference,
            "reference_consistent": reference.map(|r| r.is_consistent()),
            "written_to": out,
        }));
    } else {
        print_report(&report, format);
        println!("census");
        for (cat, n) in &census {
            println!("  {:<10} {n}", cat.token());
        }
        if let Some(r) = reference {
            let state = if r.is_consistent() { "consistent" } else { "INCONSISTENT" };
            println!(
                "reference corpus: {} paintings, {} elements, {} norms ({state})",
                r.paintings, r.elements, r.norms
            );
        }
        if let Some(dir) = out {
            println!("wrote {}", dir.display());
        }
    }
    status(&report)
}

fn import(root: &Path, file: &Path, map: &Path, min_confidence: f64, dry_run: bool, format: Format) -> ExitCode {
    let mut ds = match load(root, format) {
        Ok(ds) => ds,
        Err(code) => return code,
    };
    let records = match files::load_detections(file).and_then(|r| Ok((r, files::load_label_map(map)?))) {
        Ok(r) => r,
        Err(e) => return fail(&e, format),
    };
    let summary = ds.import_detections(&records.0, &records.1, min_confidence);
    let report = ds.acceptance_report();
    if !dry_run && report.accepted() {
        if let Err(e) = files::save_paintings(&ds, root) {
            return fail(&e, format);
        }
    }
    if format.json {
        print_json(&json!({ "summary": summary, "report": report, "written": !dry_run && report.accepted() }));
    } else {
        print_summary(&summary);
        print_report(&report, format);
    }
    status(&report)
}

fn print_summary(s: &ImportSummary) {
    for (label, n) in [
        ("total", s.total),
        ("added", s.added),
        ("duplicates", s.duplicates),
        ("below_threshold", s.below_threshold),
        ("unmapped", s.unmapped),
        ("out_of_bounds", s.out_of_bounds),
        ("invalid_confidence", s.invalid_confidence),
        ("unknown_painting", s.unknown_painting),
    ] {
        println!("{label:<20} {n}");
    }
    for p in &s.unknown_paintings {
        println!("  unknown painting {p}");
    }
}

fn stats(root: &Path, format: Format) -> ExitCode {
    let ds = match load(root, format) {
        Ok(ds) => ds,
        Err(code) => return code,
    };
    let frequency = ds.occurrence().frequencies();
    let edges = co_occurrence(&ds);
    if format.json {
        print_json(&json!({
            "census": category_census(&ds.elements),
            "frequency": frequency,
            "co_occurrence": edges,
        }));
    } else {
        println!("frequency");
        for e in ds.elements.iter() {
            println!("  {:<18} {}", e.id.as_str(), frequency.get(&e.id).copied().unwrap_or(0));
        }
        println!("co-occurrence");
        for e in &edges {
            println!("  {:<18} {:<18} {}", e.a.as_str(), e.b.as_str(), e.count);
        }
    }
    ExitCode::SUCCESS
}

fn serve(root: &Path, host: &str, port: u16, llm: &Path, store: Option<PathBuf>) -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(run_server(root, host, port, llm, store)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

async fn run_server(root: &Path, host: &str, port: u16, llm: &Path, store: Option<PathBuf>) -> anyhow::Result<()> {
    let mut config = ProviderConfig::load(llm)?;
    config.apply_env(|k| std::env::var(k).ok())?;
    let store_dir = api::store_dir(store, root);
    let gateway = Gateway::from_config(&config, &store_dir)?;
    let state = AppState::open(root, &store_dir, gateway)?.with_token(std::env::var(TOKEN_ENV).ok());
    let addr: SocketAddr = format!("{host}:{port}").parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tracing::info!(%local, store = %store_dir.display(), "serving");
    println!("listening on http://{local}");
    std::io::stdout().flush()?;
    api::serve(listener, Arc::new(state), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
