//! Wrapper-script hook injection.
//!
//! A patched script carries two blocks, each bracketed by marker lines:
//!
//! ```text
//! # WFMON BEGIN <marker_id>
//! ...
//! # WFMON END <marker_id>
//! ```
//!
//! The prologue (right after the shebang) starts the monitor in the
//! background and installs an EXIT trap that stops it; the epilogue (at end
//! of file) stops it on the normal path. Removing both blocks restores the
//! original bytes exactly.

pub const BEGIN_PREFIX: &str = "# WFMON BEGIN ";
pub const END_PREFIX: &str = "# WFMON END ";
pub const DEFAULT_MARKER_ID: &str = "wfmon";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HookConfig {
    /// Shell command line starting the sampler; `$WFMON_SERIES` holds the
    /// series path when it runs.
    pub monitor_command: String,
    /// Series file path; `{task_id}` is replaced by `task_id`, or by
    /// `${WFMON_TASK_ID:-$$}` evaluated at run time when that is unset.
    pub series_path_template: String,
    pub env_exports: Vec<(String, String)>,
    pub marker_id: String,
    pub task_id: Option<String>,
}

impl Default for HookConfig {
    fn default() -> Self {
        HookConfig {
            monitor_command: "wfmon sample --output \"$WFMON_SERIES\"".into(),
            series_path_template: ".wfmon/{task_id}.series.jsonl".into(),
            env_exports: Vec::new(),
            marker_id: DEFAULT_MARKER_ID.into(),
            task_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("corrupt hook markers at line {line}: {reason}")]
    CorruptMarkers { line: usize, reason: &'static str },
    #[error("input contains a NUL byte; not a text script")]
    BinaryInput,
    #[error("invalid hook configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchResult {
    pub text: String,
    /// 1-based line of the prologue's BEGIN marker.
    pub prologue_line: usize,
    /// 1-based line of the epilogue's BEGIN marker.
    pub epilogue_line: usize,
    pub already_patched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnpatchNotice {
    NotPatched,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnpatchResult {
    pub text: String,
    pub notice: Option<UnpatchNotice>,
}

impl HookConfig {
    pub fn validate(&self) -> Result<(), InjectError> {
        if self.monitor_command.trim().is_empty() {
            return Err(InjectError::InvalidConfig("monitor_command is empty".into()));
        }
        if self.monitor_command.contains('\n') {
            return Err(InjectError::InvalidConfig("monitor_command spans several lines".into()));
        }
        if self.marker_id.is_empty() || self.marker_id.contains(['\n', '\r']) {
            return Err(InjectError::InvalidConfig("marker_id must be a non-empty single line".into()));
        }
        for (name, _) in &self.env_exports {
            let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(InjectError::InvalidConfig(format!("bad environment variable name {name:?}")));
            }
        }
        Ok(())
    }
}

/// Escape for the inside of a double-quoted shell word.
fn dq_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '"' | '\\' | '`' | '$') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn sq_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

fn series_word(cfg: &HookConfig) -> String {
    let task = match &cfg.task_id {
        Some(id) => dq_escape(id),
        None => "${WFMON_TASK_ID:-$$}".to_owned(),
    };
    let parts: Vec<String> = cfg.series_path_template.split("{task_id}").map(dq_escape).collect();
    format!("\"{}\"", parts.join(&task))
}

fn prologue(cfg: &HookConfig) -> Vec<String> {
    let id = &cfg.marker_id;
    let mut lines = vec![format!("{BEGIN_PREFIX}{id}")];
    for (name, value) in &cfg.env_exports {
        lines.push(format!("export {name}={}", sq_quote(value)));
    }
    lines.push(format!("export WFMON_SERIES={}", series_word(cfg)));
    lines.push("mkdir -p \"$(dirname \"$WFMON_SERIES\")\" 2>/dev/null || true".into());
    lines.push("wfmon_stop() {".into());
    lines.push("  if [ -n \"${WFMON_PID:-}\" ]; then".into());
    lines.push("    kill \"$WFMON_PID\" 2>/dev/null || true".into());
    lines.push("    wait \"$WFMON_PID\" 2>/dev/null || true".into());
    lines.push("    WFMON_PID=".into());
    lines.push("  fi".into());
    lines.push("}".into());
    lines.push(format!("{} >/dev/null 2>&1 &", cfg.monitor_command));
    lines.push("WFMON_PID=$!".into());
    lines.push("trap wfmon_stop EXIT".into());
    lines.push(format!("{END_PREFIX}{id}"));
    lines
}

fn epilogue(cfg: &HookConfig) -> Vec<String> {
    let id = &cfg.marker_id;
    vec![format!("{BEGIN_PREFIX}{id}"), "wfmon_stop".into(), format!("{END_PREFIX}{id}")]
}

#[derive(Debug)]
enum Marker<'a> {
    Begin(&'a str),
    End(&'a str),
}

fn marker(line: &str) -> Option<Marker<'_>> {
    let body = line.strip_suffix('\n').unwrap_or(line);
    let body = body.strip_suffix('\r').unwrap_or(body);
    if let Some(id) = body.strip_prefix(BEGIN_PREFIX) {
        Some(Marker::Begin(id))
    } else {
        body.strip_prefix(END_PREFIX).map(Marker::End)
    }
}

#[derive(Debug)]
struct Block<'a> {
    begin: usize,
    end: usize,
    id: &'a str,
}

/// Marker blocks of `lines` as 0-based inclusive line ranges.
fn blocks<'a>(lines: &[&'a str]) -> Result<Vec<Block<'a>>, InjectError> {
    let mut out = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, line) in lines.iter().enumerate() {
        match (marker(line), open) {
            (Some(Marker::Begin(_)), Some(_)) => {
                return Err(InjectError::CorruptMarkers { line: i + 1, reason: "nested BEGIN marker" })
            }
            (Some(Marker::Begin(id)), None) => open = Some((i, id)),
            (Some(Marker::End(_)), None) => {
                return Err(InjectError::CorruptMarkers { line: i + 1, reason: "END marker without BEGIN" })
            }
            (Some(Marker::End(id)), Some((begin, open_id))) => {
                if id != open_id {
                    return Err(InjectError::CorruptMarkers { line: i + 1, reason: "END marker id does not match BEGIN" });
                }
                out.push(Block { begin, end: i, id });
                open = None;
            }
            (None, _) => {}
        }
    }
    if let Some((begin, _)) = open {
        return Err(InjectError::CorruptMarkers { line: begin + 1, reason: "BEGIN marker without END" });
    }
    Ok(out)
}

/// True when a well-formed block with `marker_id` exists.
pub fn is_patched(script: &str, marker_id: &str) -> bool {
    let lines: Vec<&str> = script.split_inclusive('\n').collect();
    blocks(&lines).is_ok_and(|b| b.iter().any(|blk| blk.id == marker_id))
}

pub fn patch_script(script: &str, cfg: &HookConfig) -> Result<PatchResult, InjectError> {
    cfg.validate()?;
    if script.contains('\0') {
        return Err(InjectError::BinaryInput);
    }
    let lines: Vec<&str> = script.split_inclusive('\n').collect();
    let existing = blocks(&lines)?;
    let ours: Vec<&Block> = existing.iter().filter(|b| b.id == cfg.marker_id).collect();
    if let (Some(first), Some(last)) = (ours.first(), ours.last()) {
        return Ok(PatchResult {
            text: script.to_owned(),
            prologue_line: first.begin + 1,
            epilogue_line: last.begin + 1,
            already_patched: true,
        });
    }

    let has_shebang = lines.first().is_some_and(|l| l.starts_with("#!"));
    let missing_eol = lines.last().is_some_and(|l| !l.ends_with('\n'));
    let mut out = String::with_capacity(script.len() + 512);
    let mut line_count = 0;
    let push_original = |out: &mut String, line: &str, count: &mut usize| {
        out.push_str(line);
        if !line.ends_with('\n') {
            out.push('\n');
        }
        *count += 1;
    };

    let body_start = usize::from(has_shebang);
    if has_shebang {
        push_original(&mut out, lines[0], &mut line_count);
    }
    let prologue_line = line_count + 1;
    for l in prologue(cfg) {
        out.push_str(&l);
        out.push('\n');
        line_count += 1;
    }
    for line in &lines[body_start..] {
        push_original(&mut out, line, &mut line_count);
    }
    let epilogue_line = line_count + 1;
    for l in epilogue(cfg) {
        out.push_str(&l);
        out.push('\n');
    }
    if missing_eol {
        // Encodes that the original had no final newline.
        out.pop();
    }
    Ok(PatchResult { text: out, prologue_line, epilogue_line, already_patched: false })
}

/// Remove every marker block. The inverse of [`patch_script`].
pub fn unpatch_script(script: &str) -> Result<UnpatchResult, InjectError> {
    let lines: Vec<&str> = script.split_inclusive('\n').collect();
    let found = blocks(&lines)?;
    if found.is_empty() {
        return Ok(UnpatchResult { text: script.to_owned(), notice: Some(UnpatchNotice::NotPatched) });
    }
    let ends_in_block = found.last().is_some_and(|b| b.end + 1 == lines.len());
    let missing_eol = ends_in_block && lines.last().is_some_and(|l| !l.ends_with('\n'));

    let mut keep = vec![true; lines.len()];
    for b in &found {
        keep[b.begin..=b.end].iter_mut().for_each(|k| *k = false);
    }
    let mut text: String = lines.iter().zip(&keep).filter(|(_, k)| **k).map(|(l, _)| *l).collect();
    if missing_eol && text.ends_with('\n') {
        text.pop();
    }
    Ok(UnpatchResult { text, notice: None })
}
