//! The `wfmon` command line.
//!
//! [`run_cli`] takes its argument vector, environment and output streams as
//! parameters so tests can drive it in-process.

pub mod config;
mod watch;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wfmon_core::event::{EventKind, MonitorEvent, Payload, RunState, TaskRecord};
use wfmon_core::fsobserver::{scan_workdir, ScanPolicy};
use wfmon_core::graph::{critical_path, export_dot, export_gantt, node_assignment};
use wfmon_core::ingest::{event_to_line, events_to_jsonl, follow_stream, parse_trace_table};
use wfmon_core::injector::{patch_script, unpatch_script, HookConfig, UnpatchNotice};
use wfmon_core::nodemon::{
    probe_static, run_sampler, DirSource, NodeProfile, SamplerConfig, StatsSource, StopSignal, TimeSeries,
};
use wfmon_core::simulator::{generate_run, reference_answers, DagShape, SimConfig};
use wfmon_core::time::Timestamp;
use wfmon_core::wfformat::{emit_instance, parse_instance, to_canonical_string, validate_instance, EmitOptions, Severity};
use wfmon_core::Monitor;

use config::{ConfigError, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OPERATIONAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wfmon", version, about = "Workflow execution monitoring toolkit")]
struct Cli {
    /// Config file of `key = value` lines (default: $WFMON_CONFIG).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fold an events file (or trace table) into a run-state report.
    Ingest(IngestArgs),
    /// Follow a growing events file and keep a DOT snapshot up to date.
    Watch(WatchArgs),
    /// Write the wf-instance document for an events file.
    Emit(EmitArgs),
    /// Graph analyses of an events file.
    Analyze(AnalyzeArgs),
    /// Print the static hardware profile of this node (or a fixture).
    ProbeNode(ProbeArgs),
    /// Sample node resource usage into a series file.
    Sample(SampleArgs),
    /// Scan a task working directory and print file_observed events.
    Scan(ScanArgs),
    /// Insert monitor hooks into a task wrapper script.
    PatchWrapper(PatchArgs),
    /// Remove monitor hooks from a task wrapper script.
    UnpatchWrapper(UnpatchArgs),
    /// Check a wf-instance document.
    Validate(ValidateArgs),
    /// Generate a synthetic run as an events file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct OutputArg {
    /// Output path; - for standard output.
    #[arg(short, long, value_name = "PATH")]
    output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IngestFormat {
    Jsonl,
    Trace,
}

impl std::str::FromStr for IngestFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Events file (.events.jsonl) or trace table; - for standard input.
    #[arg(default_value = "-")]
    input: String,
    #[arg(long, value_enum)]
    format: Option<IngestFormat>,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
pub(crate) struct WatchArgs {
    /// Events file to follow; - for standard input.
    #[arg(default_value = "-")]
    input: String,
    #[arg(long, value_name = "PATH")]
    dot_output: Option<String>,
    #[arg(long, value_name = "MS")]
    refresh_ms: Option<u64>,
    #[arg(long, value_name = "MS")]
    idle_timeout_ms: Option<u64>,
    /// Also keep every snapshot as a numbered file in this directory.
    #[arg(long, value_name = "DIR")]
    snapshot_dir: Option<String>,
}

#[derive(Debug, Args)]
struct EmitArgs {
    #[arg(default_value = "-")]
    input: String,
    /// Sidecar series path per task; {task_id} and {machine} are replaced.
    #[arg(long, value_name = "TEMPLATE")]
    series_template: Option<String>,
    /// Node profile JSON (from probe-node); repeatable.
    #[arg(long = "profile", value_name = "PATH")]
    profiles: Vec<PathBuf>,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnalyzeMode {
    CriticalPath,
    Gantt,
    Dot,
    NodeAssignment,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    mode: AnalyzeMode,
    #[arg(default_value = "-")]
    input: String,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Fixture directory, or `live`.
    #[arg(long, value_name = "DIR")]
    source: Option<String>,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeriesFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for SeriesFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long, value_name = "DIR")]
    source: Option<String>,
    #[arg(long, value_name = "MS")]
    interval_ms: Option<u64>,
    /// Stop after this many samples (0: no limit).
    #[arg(long, value_name = "N")]
    max_samples: Option<usize>,
    /// Stop after this long (0: no limit).
    #[arg(long, value_name = "MS")]
    duration_ms: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<SeriesFormat>,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct ScanArgs {
    dir: PathBuf,
    #[arg(long)]
    task_id: String,
    #[arg(long, default_value = "run")]
    run_id: String,
    /// Files modified before this instant are inputs.
    #[arg(long, value_name = "TIME")]
    started_at: Option<String>,
    #[arg(long, value_name = "BOOL", action = clap::ArgAction::Set)]
    checksum: Option<bool>,
    #[arg(long, value_name = "BYTES")]
    checksum_cap_bytes: Option<u64>,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct RewriteTarget {
    script: PathBuf,
    /// Rewrite the script file itself.
    #[arg(long, conflicts_with = "output")]
    in_place: bool,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct PatchArgs {
    #[command(flatten)]
    target: RewriteTarget,
    #[arg(long)]
    marker_id: Option<String>,
    #[arg(long)]
    monitor_command: Option<String>,
    #[arg(long, value_name = "TEMPLATE")]
    series_template: Option<String>,
    #[arg(long)]
    task_id: Option<String>,
    /// NAME=VALUE exported by the prologue; repeatable.
    #[arg(long = "export", value_name = "NAME=VALUE")]
    exports: Vec<String>,
}

#[derive(Debug, Args)]
struct UnpatchArgs {
    #[command(flatten)]
    target: RewriteTarget,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(default_value = "-")]
    document: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long, value_parser = parse_shape)]
    shape: Option<DagShape>,
    #[arg(long, value_name = "S")]
    duration_min_s: Option<f64>,
    #[arg(long, value_name = "S")]
    duration_max_s: Option<f64>,
    #[arg(long)]
    files_min: Option<u32>,
    #[arg(long)]
    files_max: Option<u32>,
    #[arg(long)]
    failure_rate: Option<f64>,
    /// Also write the simulator's own reference answers as JSON.
    #[arg(long, value_name = "PATH")]
    answers: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArg,
}

fn parse_shape(s: &str) -> Result<DagShape, String> {
    s.parse()
}

/// A problem with how the tool was invoked: exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl From<ConfigError> for UsageError {
    fn from(e: ConfigError) -> Self {
        UsageError(e.to_string())
    }
}

/// `Variant: message` for library errors, so the error kind is visible.
fn named<E: fmt::Debug + fmt::Display>(e: E) -> anyhow::Error {
    let debug = format!("{e:?}");
    let name: String = debug.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    anyhow!("{name}: {e}")
}

pub struct Io<'a> {
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Run the tool. Returns the process exit status.
pub fn run_cli<I, S>(argv: I, env: &BTreeMap<String, String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let mut io = Io { stdout, stderr };
    let result = Settings::load(cli.config.as_deref(), env)
        .map_err(|e| anyhow::Error::new(UsageError::from(e)))
        .and_then(|settings| dispatch(cli.command, &settings, &mut io));
    match result {
        Ok(code) => code,
        Err(e) => {
            let usage = e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<ConfigError>().is_some();
            let _ = writeln!(io.stderr, "wfmon: error: {e:#}");
            if usage {
                EXIT_USAGE
            } else {
                EXIT_OPERATIONAL
            }
        }
    }
}

fn usage(e: ConfigError) -> anyhow::Error {
    anyhow::Error::new(UsageError::from(e))
}

fn dispatch(command: Command, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    match command {
        Command::Ingest(a) => ingest(a, s, io),
        Command::Watch(a) => watch::run(a, s, io),
        Command::Emit(a) => emit(a, s, io),
        Command::Analyze(a) => analyze(a, s, io),
        Command::ProbeNode(a) => probe(a, s, io),
        Command::Sample(a) => sample(a, s, io),
        Command::Scan(a) => scan(a, s, io),
        Command::PatchWrapper(a) => patch(a, s, io),
        Command::UnpatchWrapper(a) => unpatch(a, s, io),
        Command::Validate(a) => validate(a, io),
        Command::Simulate(a) => simulate(a, s, io),
    }
}

fn read_input(path: &str) -> anyhow::Result<String> {
    let mut text = String::new();
    if path == "-" {
        io::stdin().read_to_string(&mut text).context("reading standard input")?;
    } else {
        text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    }
    Ok(text)
}

/// Write `content` to `path` (standard output for `-`), replacing any old
/// file atomically.
fn write_output(path: &str, content: &[u8], io: &mut Io) -> anyhow::Result<()> {
    if path == "-" {
        io.stdout.write_all(content)?;
        io.stdout.flush()?;
        return Ok(());
    }
    write_atomic(Path::new(path), content)
}

pub(crate) fn write_atomic(path: &Path, content: &[u8]) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, content).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn output_path(s: &Settings, out: &OutputArg) -> anyhow::Result<String> {
    s.resolve("output", out.output.clone()).map_err(usage)
}

/// Replay an events file, reporting rejected lines on stderr.
fn load_monitor(input: &str, io: &mut Io) -> anyhow::Result<Monitor> {
    let mut monitor = Monitor::new();
    if input == "-" {
        follow_stream(io::stdin().lock(), &mut monitor).context("reading standard input")?;
    } else {
        let f = fs::File::open(input).with_context(|| format!("opening {input}"))?;
        let report = follow_stream(io::BufReader::new(f), &mut monitor).with_context(|| format!("reading {input}"))?;
        if !report.residue.is_empty() {
            writeln!(io.stderr, "wfmon: {input}: ignoring {} bytes of unterminated final line", report.residue.len())?;
        }
    }
    for d in monitor.diagnostics() {
        writeln!(io.stderr, "wfmon: {input}: {d}")?;
    }
    Ok(monitor)
}

fn to_json_pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn ingest(a: IngestArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let format: IngestFormat = s.resolve("ingest_format", a.format).map_err(usage)?;
    let output = output_path(s, &a.out)?;
    let report = match format {
        IngestFormat::Jsonl => {
            let m = load_monitor(&a.input, io)?;
            let state = m.state();
            json!({
                "run_id": state.run_id,
                "event_count": state.event_count,
                "started_at": state.started_at,
                "ended_at": state.ended_at,
                "summary": state.summary(),
                "tasks": state.tasks.values().collect::<Vec<&TaskRecord>>(),
                "diagnostics": m.diagnostics().len(),
            })
        }
        IngestFormat::Trace => {
            let records = parse_trace_table(&read_input(&a.input)?).map_err(named)?;
            let mut state = RunState::default();
            for r in &records {
                state.tasks.insert(r.task_id.clone(), r.clone());
            }
            json!({
                "summary": state.summary(),
                "tasks": records,
            })
        }
    };
    write_output(&output, to_json_pretty(&report).as_bytes(), io)?;
    Ok(EXIT_OK)
}

fn emit(a: EmitArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let output = output_path(s, &a.out)?;
    let series_path_template = s.optional("series_template", a.series_template);
    let m = load_monitor(&a.input, io)?;
    let mut profiles = BTreeMap::new();
    for p in &a.profiles {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let profile: NodeProfile =
            serde_json::from_str(&text).with_context(|| format!("{} is not a node profile", p.display()))?;
        profiles.insert(profile.hostname.clone(), profile);
    }
    let doc = emit_instance(m.state(), m.graph(), &profiles, &EmitOptions { series_path_template }).map_err(named)?;
    write_output(&output, to_canonical_string(&doc).as_bytes(), io)?;
    Ok(EXIT_OK)
}

fn analyze(a: AnalyzeArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let output = output_path(s, &a.out)?;
    let m = load_monitor(&a.input, io)?;
    let g = m.graph();
    let text = match a.mode {
        AnalyzeMode::CriticalPath => to_json_pretty(&critical_path(g).map_err(named)?),
        AnalyzeMode::Gantt => export_gantt(g),
        AnalyzeMode::Dot => export_dot(g, &node_assignment(g)),
        AnalyzeMode::NodeAssignment => to_json_pretty(&node_assignment(g)),
    };
    write_output(&output, text.as_bytes(), io)?;
    Ok(EXIT_OK)
}

fn stats_source(s: &Settings, flag: Option<String>) -> anyhow::Result<Arc<dyn StatsSource>> {
    let source: String = s.resolve("stats_source", flag).map_err(usage)?;
    Ok(if source == "live" { Arc::new(DirSource::live()) } else { Arc::new(DirSource::fixture(source)) })
}

fn probe(a: ProbeArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let output = output_path(s, &a.out)?;
    let src = stats_source(s, a.source)?;
    let profile = probe_static(src.as_ref()).map_err(named)?;
    write_output(&output, to_json_pretty(&profile).as_bytes(), io)?;
    Ok(EXIT_OK)
}

fn sample(a: SampleArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let output = output_path(s, &a.out)?;
    let format: SeriesFormat = s.resolve("series_format", a.format).map_err(usage)?;
    let interval_ms: u64 = s.resolve("interval_ms", a.interval_ms).map_err(usage)?;
    let max_samples: usize = s.resolve("max_samples", a.max_samples).map_err(usage)?;
    let duration_ms: u64 = s.resolve("duration_ms", a.duration_ms).map_err(usage)?;
    let src = stats_source(s, a.source)?;

    let profile = probe_static(src.as_ref()).map_err(named)?;
    let mut header = TimeSeries::new(profile.hostname.clone(), interval_ms);
    header.profile = Some(profile);

    // Lines go out as soon as they exist so a killed sampler leaves a
    // readable file.
    let mut sink: Box<dyn Write + '_> = if output == "-" {
        Box::new(&mut *io.stdout)
    } else {
        if let Some(dir) = Path::new(&output).parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Box::new(fs::File::create(&output).with_context(|| format!("creating {output}"))?)
    };
    match format {
        SeriesFormat::Jsonl => writeln!(sink, "{}", header.header_line())?,
        SeriesFormat::Csv => writeln!(sink, "{}", wfmon_core::nodemon::CSV_HEADER)?,
    }
    sink.flush()?;

    let stop = StopSignal::new();
    if duration_ms > 0 {
        let timer = stop.clone();
        std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(duration_ms));
            timer.stop();
        });
    }
    let cfg = SamplerConfig { interval_ms, max_samples: (max_samples > 0).then_some(max_samples) };
    let mut write_error: Option<io::Error> = None;
    let outcome = run_sampler(src.as_ref(), cfg, &stop, |sample| {
        if write_error.is_some() {
            return;
        }
        let line = match format {
            SeriesFormat::Jsonl => TimeSeries::sample_line(sample) + "\n",
            SeriesFormat::Csv => TimeSeries::csv_row(sample),
        };
        if let Err(e) = sink.write_all(line.as_bytes()).and_then(|_| sink.flush()) {
            write_error = Some(e);
            stop.stop();
        }
    })
    .map_err(named)?;
    if let Some(e) = write_error {
        return Err(anyhow::Error::new(e).context(format!("writing {output}")));
    }
    if let Some(d) = outcome.diagnostic {
        writeln!(io.stderr, "wfmon: sampler stopped early: {d}")?;
    }
    Ok(EXIT_OK)
}

fn scan(a: ScanArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let output = output_path(s, &a.out)?;
    let checksum = s.flag_bool("checksum", a.checksum).map_err(usage)?;
    let checksum_cap_bytes: u64 = s.resolve("checksum_cap_bytes", a.checksum_cap_bytes).map_err(usage)?;
    let task_started_at = match &a.started_at {
        Some(t) => Some(
            Timestamp::parse_lenient(t).map_err(|e| anyhow::Error::new(UsageError(format!("--started-at: {e}"))))?,
        ),
        None => None,
    };
    let policy = ScanPolicy { checksum, checksum_cap_bytes, task_started_at };
    let scanned = scan_workdir(&a.dir, &a.task_id, &policy).map_err(named)?;
    for d in &scanned.diagnostics {
        writeln!(io.stderr, "wfmon: scan: {d}")?;
    }
    let now = Timestamp::now();
    let mut text = String::new();
    for rec in scanned.records {
        let ev = MonitorEvent::new(EventKind::FileObserved, now, &a.run_id, Payload::File(rec));
        text.push_str(&event_to_line(&ev));
        text.push('\n');
    }
    write_output(&output, text.as_bytes(), io)?;
    Ok(EXIT_OK)
}

fn rewrite_destination(t: &RewriteTarget, s: &Settings) -> anyhow::Result<String> {
    if t.in_place {
        Ok(t.script.to_string_lossy().into_owned())
    } else {
        output_path(s, &t.out)
    }
}

fn patch(a: PatchArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let dest = rewrite_destination(&a.target, s)?;
    let mut env_exports = Vec::new();
    for e in &a.exports {
        let (k, v) = e
            .split_once('=')
            .ok_or_else(|| anyhow::Error::new(UsageError(format!("--export expects NAME=VALUE, got {e:?}"))))?;
        env_exports.push((k.to_owned(), v.to_owned()));
    }
    let cfg = HookConfig {
        monitor_command: s.resolve("monitor_command", a.monitor_command).map_err(usage)?,
        series_path_template: s.resolve("series_template", a.series_template).map_err(usage)?,
        env_exports,
        marker_id: s.resolve("marker_id", a.marker_id).map_err(usage)?,
        task_id: a.task_id,
    };
    let script = fs::read(&a.target.script).with_context(|| format!("reading {}", a.target.script.display()))?;
    let script = String::from_utf8(script).map_err(|_| anyhow!("BinaryInput: {} is not UTF-8 text", a.target.script.display()))?;
    let result = patch_script(&script, &cfg).map_err(named)?;
    if result.already_patched {
        writeln!(io.stderr, "wfmon: {} is already patched", a.target.script.display())?;
    } else {
        writeln!(io.stderr, "wfmon: prologue at line {}, epilogue at line {}", result.prologue_line, result.epilogue_line)?;
    }
    write_output(&dest, result.text.as_bytes(), io)?;
    Ok(EXIT_OK)
}

fn unpatch(a: UnpatchArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let dest = rewrite_destination(&a.target, s)?;
    let script = fs::read(&a.target.script).with_context(|| format!("reading {}", a.target.script.display()))?;
    let script = String::from_utf8(script).map_err(|_| anyhow!("BinaryInput: {} is not UTF-8 text", a.target.script.display()))?;
    let result = unpatch_script(&script).map_err(named)?;
    if result.notice == Some(UnpatchNotice::NotPatched) {
        writeln!(io.stderr, "wfmon: NotPatched: {} has no hook blocks", a.target.script.display())?;
    }
    write_output(&dest, result.text.as_bytes(), io)?;
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs, io: &mut Io) -> anyhow::Result<i32> {
    let doc = parse_instance(&read_input(&a.document)?).map_err(named)?;
    let diags = validate_instance(&doc);
    for d in &diags {
        writeln!(io.stderr, "{d}")?;
    }
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    if errors > 0 {
        writeln!(io.stderr, "wfmon: {errors} error(s)")?;
        return Ok(EXIT_OPERATIONAL);
    }
    Ok(EXIT_OK)
}

fn simulate(a: SimulateArgs, s: &Settings, io: &mut Io) -> anyhow::Result<i32> {
    let output = output_path(s, &a.out)?;
    let shape = match a.shape {
        Some(sh) => sh,
        None => s.resolve::<String>("shape", None).map_err(usage)?.parse().map_err(|e: String| anyhow::Error::new(UsageError(e)))?,
    };
    let cfg = SimConfig {
        seed: s.resolve("seed", a.seed).map_err(usage)?,
        task_count: s.resolve("tasks", a.tasks).map_err(usage)?,
        machine_count: s.resolve("machines", a.machines).map_err(usage)?,
        dag_shape: shape,
        duration_range_s: (
            s.resolve("duration_min_s", a.duration_min_s).map_err(usage)?,
            s.resolve("duration_max_s", a.duration_max_s).map_err(usage)?,
        ),
        files_per_task: (s.resolve("files_min", a.files_min).map_err(usage)?, s.resolve("files_max", a.files_max).map_err(usage)?),
        failure_rate: s.resolve("failure_rate", a.failure_rate).map_err(usage)?,
    };
    if let Err(e) = cfg.validate() {
        bail!(UsageError(format!("invalid simulator config: {e}")));
    }
    write_output(&output, events_to_jsonl(&generate_run(&cfg)).as_bytes(), io)?;
    if let Some(path) = a.answers {
        write_atomic(&path, to_json_pretty(&reference_answers(&cfg)).as_bytes())?;
    }
    Ok(EXIT_OK)
}
