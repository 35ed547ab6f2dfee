//! The `fits` command line.
//!
//! Exit codes: 0 success, 1 usage or invalid input, 2 lint errors,
//! 3 mission not fully completed, 4 I/O failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use fits_core::analysis::{self, ingest_telemetry, render_markdown, TelemetrySample, DEFAULT_TOLERANCE_S};
use fits_core::compiler::{Compilation, CompileOptions, LintReport};
use fits_core::engine::{parse_ndjson, to_ndjson, MissionState, TaskStatus, WallClock};
use fits_core::library::{Library, LibraryError};
use fits_core::model::Suite;
use fits_core::package::MissionPackage;
use fits_core::sim::{happy_script, parse_script, run_script};
use fits_service::store::{EVENTS_FILE, PACKAGE_FILE, TELEMETRY_DIR};
use fits_service::{Service, Store};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_LINT: i32 = 2;
pub const EXIT_INCOMPLETE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "fits", version, about = "Drone field-test scenarios: lint, compile, simulate, serve, report")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check scenarios for structural errors.
    Lint {
        /// `.fits` or `.csv` files (imports are followed).
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Only these scenario ids.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Treat conditions nobody produces as external.
        #[arg(long)]
        auto_external: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Compile scenarios or suites into mission packages.
    Compile {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Compile only these scenario ids.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Compile only the suite with this name.
        #[arg(long)]
        suite: Option<String>,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        auto_external: bool,
    },
    /// Run a scripted mission offline and write its event log.
    Simulate {
        /// A `.pkg.json` mission package.
        package: PathBuf,
        /// Action script; without one, a happy-path script is generated.
        script: Option<PathBuf>,
        /// JSON file holding a bindings object, e.g. {"sUAS_1": "pilot_1"}.
        #[arg(long)]
        bindings: Option<PathBuf>,
        /// Mission directory to write (package, events, script).
        #[arg(short, long, default_value = "mission")]
        out: PathBuf,
        #[arg(long, default_value = "sim")]
        mission_id: String,
    },
    /// Run the HTTP mission service.
    Serve {
        #[arg(long, env = "FITS_STORE", default_value = "fits-store")]
        store: PathBuf,
        #[arg(long, env = "FITS_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Default correlation tolerance, seconds.
        #[arg(long, env = "FITS_TOLERANCE", default_value_t = DEFAULT_TOLERANCE_S)]
        tolerance: f64,
        /// Alarm scan interval, milliseconds.
        #[arg(long, env = "FITS_TICK_MS", default_value_t = 1000)]
        tick_ms: u64,
    },
    /// Build a report from a mission directory's log and telemetry.
    Report {
        mission_dir: PathBuf,
        /// Extra telemetry CSV files (the directory's telemetry/ is always read).
        #[arg(long = "telemetry")]
        telemetry: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_S)]
        tolerance: f64,
        /// Where to write the report files (defaults to the mission directory).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

type Outcome = Result<i32, Failure>;

/// Runs a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Lint { files, scenarios, auto_external, format } => lint(&files, &scenarios, auto_external, format),
        Command::Compile { files, scenarios, suite, out, auto_external } => {
            compile(&files, &scenarios, suite.as_deref(), &out, auto_external)
        }
        Command::Simulate { package, script, bindings, out, mission_id } => {
            simulate(&package, script.as_deref(), bindings.as_deref(), &out, &mission_id)
        }
        Command::Serve { store, listen, tolerance, tick_ms } => serve(&store, listen, tolerance, tick_ms),
        Command::Report { mission_dir, telemetry, tolerance, out } => report(&mission_dir, &telemetry, tolerance, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_library(files: &[PathBuf]) -> Result<Library, Failure> {
    let lib = Library::load(files).map_err(|e| match e {
        LibraryError::Io { path, source } => Failure::io(&path, source),
        diags @ LibraryError::Diagnostics(_) => Failure::new(EXIT_LINT, diags.to_string()),
    })?;
    for w in lib.warnings() {
        eprintln!("{w}");
    }
    Ok(lib)
}

fn selected(lib: &Library, scenarios: &[String]) -> Result<Vec<String>, Failure> {
    if scenarios.is_empty() {
        return Ok(lib.scenarios.keys().cloned().collect());
    }
    for id in scenarios {
        if !lib.scenarios.contains_key(id) {
            return Err(Failure::new(EXIT_USAGE, format!("no scenario {id}")));
        }
    }
    Ok(scenarios.to_vec())
}

fn lint(files: &[PathBuf], scenarios: &[String], auto_external: bool, format: Format) -> Outcome {
    let lib = load_library(files)?;
    let options = CompileOptions { auto_external };
    let reports: Vec<LintReport> =
        selected(&lib, scenarios)?.iter().filter_map(|id| lib.lint(id, &options)).collect();
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialize")),
        Format::Text => {
            for r in &reports {
                for f in &r.findings {
                    println!("{}: {f}", r.scenario_id);
                }
                println!("{}: {}", r.scenario_id, if r.passed { "ok" } else { "FAILED" });
            }
        }
    }
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { EXIT_LINT })
}

fn print_failed(report: &LintReport) {
    for f in report.errors() {
        eprintln!("{}: {f}", report.scenario_id);
    }
}

fn compile(files: &[PathBuf], scenarios: &[String], suite: Option<&str>, out: &Path, auto_external: bool) -> Outcome {
    let lib = load_library(files)?;
    let options = CompileOptions { auto_external };

    let mut suites: Vec<Suite> = Vec::new();
    for resolved in lib.resolved_suites() {
        match resolved {
            Ok(parsed) => suites.push(parsed.value),
            Err(diags) => {
                for d in &diags {
                    eprintln!("{d}");
                }
                return Ok(EXIT_LINT);
            }
        }
    }
    if let Some(name) = suite {
        suites.retain(|s| s.name == name);
        if suites.is_empty() {
            return Err(Failure::new(EXIT_USAGE, format!("no suite named {name}")));
        }
    }

    // Suites are all-or-nothing; plain scenarios compile one by one.
    let mut compiled: Vec<Compilation> = Vec::new();
    let mut failed = false;
    if scenarios.is_empty() && !suites.is_empty() {
        for s in &suites {
            match lib.compile_suite(s, &options) {
                Ok(graphs) if graphs.is_empty() => eprintln!("warning: suite {} is empty", s.name),
                Ok(graphs) => compiled.extend(graphs),
                Err(failure) => {
                    eprintln!("{failure}");
                    failure.failed.iter().for_each(print_failed);
                    failed = true;
                }
            }
        }
    } else {
        for id in selected(&lib, scenarios)? {
            match lib.compile(&id, &options).expect("selected ids exist") {
                Ok(c) => compiled.push(c),
                Err(report) => {
                    print_failed(&report);
                    failed = true;
                }
            }
        }
    }
    if failed {
        return Ok(EXIT_LINT);
    }
    if compiled.is_empty() {
        eprintln!("warning: nothing to compile");
        return Ok(0);
    }
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    for c in &compiled {
        for f in &c.report.findings {
            eprintln!("{}: {f}", c.report.scenario_id);
        }
        let package = MissionPackage::from_graph(&c.graph);
        let path = out.join(package.file_name());
        fs::write(&path, package.to_json()).map_err(|e| Failure::io(&path, e))?;
        println!("{} ({} tasks) -> {}", package.mission_template_id, package.tasks.len(), path.display());
    }
    Ok(0)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, content: &str) -> Result<(), Failure> {
    fs::write(path, content).map_err(|e| Failure::io(path, e))
}

fn read_package(path: &Path) -> Result<MissionPackage, Failure> {
    MissionPackage::from_json(&read(path)?).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

/// A fixed-width status table ending in `N/M completed`.
pub fn status_table(state: &MissionState) -> String {
    let mut out = String::new();
    let width = state.tasks().iter().map(|t| t.task_id.len()).max().unwrap_or(4).max(4);
    let _ = writeln!(out, "{:<width$}  {:<11}  {}", "task", "status", "responsible");
    for (task, status) in state.statuses() {
        let _ = writeln!(out, "{:<width$}  {:<11}  {}", task.task_id, status.as_str(), state.resolve(&task.responsible));
    }
    let _ = writeln!(out, "{}/{} completed", state.count(TaskStatus::Completed), state.tasks().len());
    out
}

fn simulate(package_path: &Path, script: Option<&Path>, bindings: Option<&Path>, out: &Path, mission_id: &str) -> Outcome {
    let package_text = read(package_path)?;
    let package = read_package(package_path)?;
    let graph = Arc::new(package.graph());
    let bindings: BTreeMap<String, String> = match bindings {
        Some(p) => serde_json::from_str(&read(p)?)
            .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: expected a JSON object of strings: {e}", p.display())))?,
        None => BTreeMap::new(),
    };
    let script = match script {
        Some(p) => parse_script(&read(p)?).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", p.display())))?,
        None => happy_script(&graph, &bindings).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?,
    };

    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    write(&out.join(PACKAGE_FILE), &package_text)?;
    write(&out.join("script.txt"), &script.to_string())?;
    let (state, error) = match run_script(mission_id, graph, &bindings, &script) {
        Ok(state) => (state, None),
        Err((Some(state), e)) => (state, Some(e)),
        Err((None, e)) => return Err(Failure::new(EXIT_USAGE, e.to_string())),
    };
    write(&out.join(EVENTS_FILE), &to_ndjson(state.events()))?;
    print!("{}", status_table(&state));
    println!("digest {}", state.digest());
    if let Some(e) = error {
        eprintln!("error: {e}");
        return Ok(EXIT_INCOMPLETE);
    }
    let all = state.count(TaskStatus::Completed) == state.tasks().len();
    Ok(if all { 0 } else { EXIT_INCOMPLETE })
}

fn serve(store: &Path, listen: SocketAddr, tolerance: f64, tick_ms: u64) -> Outcome {
    let store = Store::open(store).map_err(|e| Failure::io(store, e))?;
    let root = store.root().to_path_buf();
    let service = Service::recover(store, Arc::new(WallClock), tolerance).map_err(|e| Failure::io(&root, e))?;
    for m in service.list() {
        if let Some(err) = &m.error {
            eprintln!("warning: mission {} quarantined: {err}", m.mission_id);
        }
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await.map_err(|e| Failure::new(EXIT_IO, format!("{listen}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
        println!("listening on http://{addr} (store {})", root.display());
        fits_service::serve(listener, Arc::new(service), Duration::from_millis(tick_ms.max(10)))
            .await
            .map_err(|e| Failure::new(EXIT_IO, e.to_string()))
    })?;
    Ok(0)
}

fn report(dir: &Path, extra_telemetry: &[PathBuf], tolerance: f64, out: Option<&Path>) -> Outcome {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Failure::new(EXIT_USAGE, "tolerance must be a non-negative number"));
    }
    let package = read_package(&dir.join(PACKAGE_FILE))?;
    let events_path = dir.join(EVENTS_FILE);
    let events = parse_ndjson(&read(&events_path)?).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", events_path.display())))?;
    let mission_id = events
        .first()
        .and_then(|e| e.payload.get("mission_id"))
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .unwrap_or_else(|| dir.file_name().and_then(|n| n.to_str()).unwrap_or("mission").to_string());

    let mut files: Vec<PathBuf> = Vec::new();
    let telemetry_dir = dir.join(TELEMETRY_DIR);
    if telemetry_dir.is_dir() {
        let entries = fs::read_dir(&telemetry_dir).map_err(|e| Failure::io(&telemetry_dir, e))?;
        let mut found: Vec<PathBuf> =
            entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "csv")).collect();
        found.sort();
        files.extend(found);
    }
    files.extend(extra_telemetry.iter().cloned());
    let mut samples: Vec<TelemetrySample> = Vec::new();
    for f in &files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("telemetry");
        let ingested = ingest_telemetry(&read(f)?, name).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", f.display())))?;
        for w in &ingested.warnings {
            eprintln!("warning: {}: {w}", f.display());
        }
        samples.extend(ingested.samples);
    }
    samples.sort_by(|a, b| (a.timestamp, &a.source).cmp(&(b.timestamp, &b.source)));

    let report = analysis::build_report(&mission_id, &events, Arc::new(package.graph()), &samples, tolerance)
        .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", events_path.display())))?;
    let out = out.unwrap_or(dir);
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let json_path = out.join(format!("{mission_id}.report.json"));
    let md_path = out.join(format!("{mission_id}.report.md"));
    write(&json_path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    write(&md_path, &render_markdown(&report))?;
    let done = report.totals.get(&TaskStatus::Completed).copied().unwrap_or(0);
    println!("{done}/{} completed; wrote {} and {}", report.task_count, json_path.display(), md_path.display());
    Ok(0)
}
