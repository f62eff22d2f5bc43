//! `rexkb`: serve, import, export, reindex and query a knowledge base
//! stored in a data directory.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use rexkb_core::{Actor, ActorId, ElementId, ElementType, Engine, EngineConfig, KbError, Role};
use rexkb_server::config::SNAPSHOT_FILE;
use rexkb_server::ServerConfig;

/// Offline commands act as this built-in administrator.
const OPERATOR: &str = "operator";
const LOCK_FILE: &str = "rexkb.lock";
const REINDEX_SAMPLE: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "rexkb", version, about = "Operating-experience knowledge base")]
struct Cli {
    /// Data directory holding the knowledge base snapshot.
    #[arg(long, global = true, env = "REXKB_DATA")]
    data: Option<PathBuf>,
    /// Service configuration (TOML). Also supplies schema, stopwords and weights.
    #[arg(long, global = true, env = "REXKB_CONFIG")]
    config: Option<PathBuf>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Start the HTTP service.
    Serve,
    /// Import a JSON Lines file ("-" for stdin).
    Import { file: PathBuf },
    /// Export the knowledge base as JSON Lines ("-" for stdout).
    Export { file: PathBuf },
    /// Rebuild the similarity index and check it against the live one.
    Reindex,
    /// Free-text search over indexed elements.
    Search {
        query: String,
        /// Restrict to an element type; repeatable.
        #[arg(long = "type", value_name = "T")]
        types: Vec<ElementType>,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Ranked link suggestions for an element.
    Suggest {
        element: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Counts per element type, link status and workflow state.
    Stats,
}

/// A failure with its stable code; printed as `error: CODE: message`.
struct Failure {
    code: &'static str,
    message: String,
    exit: u8,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: "USAGE",
            message: message.into(),
            exit: 2,
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: "IO_FAILURE",
            message: message.into(),
            exit: 1,
        }
    }

    fn config(err: anyhow::Error) -> Self {
        Self {
            code: "CONFIG_ERROR",
            message: format!("{err:#}"),
            exit: 1,
        }
    }
}

impl From<KbError> for Failure {
    fn from(err: KbError) -> Self {
        Self {
            code: err.code(),
            message: err.to_string(),
            exit: 1,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(err: io::Error) -> Self {
        // a closed pipe on stdout (`| head`) is not a failure
        let exit = if err.kind() == io::ErrorKind::BrokenPipe {
            0
        } else {
            1
        };
        Self {
            code: "IO_FAILURE",
            message: err.to_string(),
            exit,
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

/// An opened data directory, held exclusively until dropped.
struct Store {
    engine: Engine,
    snapshot: PathBuf,
    _lock: File,
}

impl Store {
    fn open(dir: &Path, config: EngineConfig) -> Outcome<Self> {
        let lock = lock_dir(dir)?;
        let engine = Engine::new(config);
        engine.register_actor(Actor {
            id: OPERATOR.into(),
            name: "local operator".into(),
            role: Role::Admin,
        });
        let snapshot = dir.join(SNAPSHOT_FILE);
        if snapshot.exists() {
            engine.load(&snapshot)?;
        }
        Ok(Self {
            engine,
            snapshot,
            _lock: lock,
        })
    }

    fn save(&self) -> Outcome {
        Ok(self.engine.snapshot(&self.snapshot)?)
    }
}

fn lock_dir(dir: &Path) -> Outcome<File> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    let file = File::create(dir.join(LOCK_FILE))?;
    file.try_lock().map_err(|_| {
        Failure::io(format!(
            "{} is in use by another rexkb process",
            dir.display()
        ))
    })?;
    Ok(file)
}

fn operator() -> ActorId {
    OPERATOR.into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)),
        )
        .with_writer(io::stderr)
        .with_ansi(io::stderr().is_terminal())
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.exit == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.code, f.message);
            ExitCode::from(f.exit)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(p) => Some(ServerConfig::load(p).map_err(Failure::config)?),
        None => None,
    };
    if let Command::Serve = cli.command {
        let mut config = config.ok_or_else(|| Failure::usage("serve needs --config"))?;
        if cli.data.is_some() {
            config.data_dir = cli.data;
        }
        let _lock = config.data_dir.as_deref().map(lock_dir).transpose()?;
        let runtime = tokio::runtime::Runtime::new()?;
        return runtime
            .block_on(rexkb_server::serve(config))
            .map_err(|e| Failure {
                code: "IO_FAILURE",
                message: format!("{e:#}"),
                exit: 1,
            });
    }

    let dir = cli
        .data
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.data_dir.clone()))
        .ok_or_else(|| Failure::usage("no data directory; pass --data or set REXKB_DATA"))?;
    let store = Store::open(&dir, config.map(|c| c.engine).unwrap_or_default())?;
    let kb = &store.engine;
    let mut out = io::stdout().lock();

    match cli.command {
        Command::Serve => unreachable!(),
        Command::Import { file } => {
            let report = if file.as_os_str() == "-" {
                kb.bulk_import(&operator(), io::stdin().lock())?
            } else {
                let f = File::open(&file)
                    .map_err(|e| Failure::io(format!("{}: {e}", file.display())))?;
                kb.bulk_import(&operator(), BufReader::new(f))?
            };
            store.save()?;
            if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report).unwrap())?;
            } else {
                let accepted: Vec<String> = report
                    .accepted
                    .iter()
                    .map(|(k, n)| format!("{k}={n}"))
                    .collect();
                writeln!(out, "accepted {}", accepted.join(" "))?;
                writeln!(out, "rejected {}", report.rejected.len())?;
                for r in &report.rejected {
                    writeln!(out, "  line {}: {}: {}", r.line, r.code, r.message)?;
                }
            }
        }
        Command::Export { file } => {
            let text = kb.export_string(&operator())?;
            if file.as_os_str() == "-" {
                out.write_all(text.as_bytes())?;
            } else {
                fs::write(&file, &text)
                    .map_err(|e| Failure::io(format!("{}: {e}", file.display())))?;
                if cli.json {
                    writeln!(
                        out,
                        "{}",
                        json!({ "records": text.lines().count(), "file": file })
                    )?;
                } else {
                    writeln!(
                        out,
                        "exported {} records to {}",
                        text.lines().count(),
                        file.display()
                    )?;
                }
            }
        }
        Command::Reindex => {
            let report = kb.reindex(REINDEX_SAMPLE)?;
            store.save()?;
            if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report).unwrap())?;
            } else if report.equivalent {
                writeln!(
                    out,
                    "equivalent ({} documents, {} queries)",
                    report.documents, report.queries
                )?;
            } else {
                writeln!(out, "not equivalent")?;
                for m in &report.mismatches {
                    writeln!(out, "  {m}")?;
                }
            }
            if !report.equivalent {
                return Err(Failure {
                    code: "INDEX_MISMATCH",
                    message: format!(
                        "{} queries differ; the rebuilt index is now live",
                        report.mismatches.len()
                    ),
                    exit: 1,
                });
            }
        }
        Command::Search { query, types, k } => {
            let filter: Option<BTreeSet<ElementType>> =
                (!types.is_empty()).then(|| types.into_iter().collect());
            let hits = kb.search(&query, k, filter.as_ref())?;
            let rows: Vec<_> = hits
                .iter()
                .enumerate()
                .map(|(i, h)| {
                    let el = kb.element(&h.doc_id)?;
                    Ok((i + 1, h, el))
                })
                .collect::<Result<_, KbError>>()?;
            if cli.json {
                let body: Vec<_> = rows
                    .iter()
                    .map(|(rank, h, el)| {
                        json!({ "rank": rank, "id": h.doc_id, "score": h.score, "element_type": el.element_type, "title": el.title })
                    })
                    .collect();
                writeln!(out, "{}", serde_json::to_string_pretty(&body).unwrap())?;
            } else {
                for (rank, h, el) in rows {
                    writeln!(
                        out,
                        "{rank:>3}  {:.4}  {}  {}  {}",
                        h.score, h.doc_id, el.element_type, el.title
                    )?;
                }
            }
        }
        Command::Suggest { element, k } => {
            let id = ElementId::from(element.as_str());
            let suggestions = kb.suggest_links(&id, k, None)?;
            if cli.json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&suggestions).unwrap()
                )?;
            } else {
                for s in &suggestions {
                    let title = kb
                        .element(&s.candidate_target)
                        .map(|e| e.title)
                        .unwrap_or_default();
                    writeln!(
                        out,
                        "{:>3}  {:.4}  {}  {}  text={:.4} tag={:.4} prior={:.4}  {}",
                        s.rank,
                        s.score,
                        s.link_type,
                        s.candidate_target,
                        s.breakdown.text_score,
                        s.breakdown.tag_score,
                        s.breakdown.type_prior,
                        title
                    )?;
                }
            }
        }
        Command::Stats => {
            let stats = kb.stats();
            if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&stats).unwrap())?;
            } else {
                writeln!(out, "elements")?;
                for (t, n) in &stats.elements {
                    writeln!(out, "  {:<20} {n}", t.to_string())?;
                }
                writeln!(out, "links")?;
                for (s, n) in &stats.links {
                    writeln!(out, "  {s:<20} {n}")?;
                }
                writeln!(out, "workflow")?;
                for (s, n) in &stats.workflow {
                    writeln!(out, "  {:<20} {n}", s.to_string())?;
                }
                writeln!(out, "ontology items         {}", stats.ontology_items)?;
            }
        }
    }
    Ok(())
}
