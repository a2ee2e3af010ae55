//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::io::{IsTerminal, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use embedscape::eval::{default_report_specs, layout_quality_report, DEFAULT_CORRUPTION_RANGE, DEFAULT_K_EVAL};
use embedscape::store::Store;
use embedscape::wire::{parse_ingest, parse_ingest_as};
use embedscape::{ExportFormat, ExportOptions, ParamValue, Registry, ReducerSpec};

use crate::serve::{serve, shutdown_signal, ServeConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "embedscape", version, about = "Explore and annotate embedding collections", arg_required_else_help = true)]
pub struct Cli {
    /// Store directory.
    #[arg(long, env = "DATA_DIR", default_value = "./data", global = true)]
    pub data_dir: PathBuf,
    /// error, warn, info, debug or trace.
    #[arg(long, env = "LOG_LEVEL", default_value = "info", global = true)]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "HOST", default_value = "127.0.0.1")]
        host: String,
        /// Remote embedding provider base URL, exposed as provider `remote`.
        #[arg(long, env = "PROVIDER_URL")]
        provider_url: Option<String>,
        /// Per-call provider timeout in seconds.
        #[arg(long, default_value_t = 10.0)]
        provider_timeout: f64,
    },
    /// Create a project and print its id.
    Create {
        name: String,
        #[arg(long)]
        dim: usize,
        /// Comma-separated label schema.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
    },
    /// Ingest an NDJSON or SPWK file and print the record count.
    Ingest {
        project: String,
        file: PathBuf,
        /// ndjson or spwk; detected from the content when omitted.
        #[arg(long)]
        format: Option<String>,
    },
    /// Fit a layout and print its id and the SHA-256 of its point stream.
    Fit {
        project: String,
        #[arg(long)]
        reducer: String,
        #[arg(long)]
        dims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reducer parameter, repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// Write a layout-quality report as CSV.
    Eval {
        project: String,
        /// Retrieval depth.
        #[arg(long = "k", default_value_t = DEFAULT_K_EVAL)]
        k_eval: usize,
        /// Comma-separated reducer:dims list; defaults to pca and hnne in 2D and 3D.
        #[arg(long, value_delimiter = ',')]
        reducers: Vec<String>,
        /// csv or json
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Export current annotations.
    Export {
        project: String,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        include_foreign: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Inject 3 to 5 foreign records from a pool file and print their ids.
    Inject {
        project: String,
        pool: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = *DEFAULT_CORRUPTION_RANGE.start())]
        min: usize,
        #[arg(long, default_value_t = *DEFAULT_CORRUPTION_RANGE.end())]
        max: usize,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            let code = match e.kind() {
                DisplayHelp | DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.log_level.parse::<tracing::Level>() {
        Ok(l) => l,
        Err(_) => {
            eprintln!("error: invalid log level `{}`", cli.log_level);
            return EXIT_USAGE;
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn open(data_dir: &std::path::Path) -> Result<Store, String> {
    Store::open(data_dir, Registry::with_defaults()).map_err(|e| e.to_string())
}

fn read(path: &std::path::Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_param(kv: &str) -> Result<(String, ParamValue), String> {
    let (k, v) = kv.split_once('=').ok_or_else(|| format!("parameter `{kv}` is not KEY=VALUE"))?;
    let value = v.parse::<f64>().map(ParamValue::Number).unwrap_or_else(|_| ParamValue::Text(v.to_string()));
    Ok((k.to_string(), value))
}

fn parse_reducer(s: &str) -> Result<ReducerSpec, String> {
    let (name, d) = s.split_once(':').ok_or_else(|| format!("reducer `{s}` is not NAME:DIMS"))?;
    let d = d.parse().map_err(|_| format!("reducer `{s}`: bad dimension"))?;
    Ok(ReducerSpec::new(name, d))
}

fn execute(cli: Cli) -> Result<(), String> {
    let out = std::io::stdout();
    let mut out = out.lock();
    let e = |e: embedscape::Error| e.to_string();
    match cli.command {
        Command::Serve { port, host, provider_url, provider_timeout } => {
            let config = ServeConfig {
                host,
                port,
                data_dir: cli.data_dir,
                provider_url,
                provider_timeout: Duration::from_secs_f64(provider_timeout),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(async {
                let shutdown = shutdown_signal();
                serve(
                    config,
                    |addr| {
                        println!("listening on {addr}");
                        let _ = std::io::stdout().flush();
                    },
                    shutdown,
                )
                .await
            })?;
        }
        Command::Create { name, dim, labels } => {
            let store = open(&cli.data_dir)?;
            let p = store.create_project(&name, dim, labels).map_err(e)?;
            writeln!(out, "{}", p.id).map_err(|e| e.to_string())?;
        }
        Command::Ingest { project, file, format } => {
            let bytes = read(&file)?;
            let rows = match format {
                Some(f) => parse_ingest_as(&f, &bytes),
                None => parse_ingest(&bytes),
            }
            .map_err(|err| format!("{}: {err}", file.display()))?;
            let store = open(&cli.data_dir)?;
            let n = store.ingest(&project, rows).map_err(e)?;
            writeln!(out, "{n}").map_err(|e| e.to_string())?;
        }
        Command::Fit { project, reducer, dims, seed, params } => {
            let mut spec = ReducerSpec::new(reducer, dims).with_seed(seed);
            for kv in &params {
                let (k, v) = parse_param(kv)?;
                spec.params.insert(k, v);
            }
            let store = open(&cli.data_dir)?;
            let l = store.fit_layout(&project, &spec).map_err(e)?;
            let digest = hex::encode(Sha256::digest(l.points_bytes()));
            writeln!(out, "{} {digest}", l.id()).map_err(|e| e.to_string())?;
        }
        Command::Eval { project, k_eval, reducers, format } => {
            let specs = if reducers.is_empty() {
                default_report_specs()
            } else {
                reducers.iter().map(|r| parse_reducer(r)).collect::<Result<_, _>>()?
            };
            if format != "csv" && format != "json" {
                return Err(format!("unsupported report format `{format}`"));
            }
            let store = open(&cli.data_dir)?;
            let snap = store.snapshot(&project).map_err(e)?;
            let report = layout_quality_report(&snap.data, store.registry(), &specs, k_eval).map_err(e)?;
            let bytes = if format == "csv" { report.to_csv() } else { report.to_json() };
            let id = store.save_report(&project, report).map_err(e)?;
            tracing::info!(report = %id, "report saved");
            out.write_all(&bytes).map_err(|e| e.to_string())?;
        }
        Command::Export { project, format, include_foreign, output } => {
            let format: ExportFormat = format.parse().map_err(e)?;
            let store = open(&cli.data_dir)?;
            let bytes = store.export(&project, format, ExportOptions { include_foreign }).map_err(e)?;
            match output {
                Some(path) => std::fs::write(&path, bytes).map_err(|err| format!("{}: {err}", path.display()))?,
                None => out.write_all(&bytes).map_err(|e| e.to_string())?,
            }
        }
        Command::Inject { project, pool, seed, min, max } => {
            let rows = parse_ingest(&read(&pool)?).map_err(|err| format!("{}: {err}", pool.display()))?;
            let store = open(&cli.data_dir)?;
            let ids = store.inject(&project, &rows, seed, min..=max).map_err(e)?;
            for id in ids {
                writeln!(out, "{id}").map_err(|e| e.to_string())?;
            }
        }
    }
    Ok(())
}
