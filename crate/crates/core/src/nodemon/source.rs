use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::net::{IpAddr, Ipv6Addr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Nic, NodeError, NodeProfile};

/// Logical files a stats source provides. Fixture directories use
/// [`StatFile::file_name`] verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StatFile {
    Hostname,
    CpuIdentity,
    CpuCounters,
    MemInfo,
    NetCounters,
    Addresses,
    NicInfo,
}

impl StatFile {
    pub const ALL: [StatFile; 7] = [
        StatFile::Hostname,
        StatFile::CpuIdentity,
        StatFile::CpuCounters,
        StatFile::MemInfo,
        StatFile::NetCounters,
        StatFile::Addresses,
        StatFile::NicInfo,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            StatFile::Hostname => "hostname",
            StatFile::CpuIdentity => "cpu_identity",
            StatFile::CpuCounters => "cpu_counters",
            StatFile::MemInfo => "mem_info",
            StatFile::NetCounters => "net_counters",
            StatFile::Addresses => "addresses",
            StatFile::NicInfo => "nic_info",
        }
    }

    /// Counter files change between snapshots; the rest are static.
    pub fn is_counter(self) -> bool {
        matches!(self, StatFile::CpuCounters | StatFile::MemInfo | StatFile::NetCounters)
    }
}

pub trait StatsSource: Send + Sync {
    /// Full text of `file`, or [`NodeError::SourceMissing`].
    fn read(&self, file: StatFile) -> Result<String, NodeError>;

    /// Called by the sampler after each counter snapshot.
    fn advance(&self) {}
}

fn read_path(path: &Path, file: StatFile) -> Result<String, NodeError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(NodeError::SourceMissing(file.file_name().to_owned())),
        Err(e) => Err(NodeError::Io { file: path.display().to_string(), message: e.to_string() }),
    }
}

#[derive(Debug)]
enum Layout {
    Fixture,
    Live,
}

/// Directory-backed source.
///
/// A fixture directory holds the files named by [`StatFile::file_name`]. It
/// may also contain `frames/<n>/` subdirectories; counter files are then read
/// from the current frame (advancing once per snapshot and sticking at the
/// last one), which replays a scripted counter sequence.
#[derive(Debug)]
pub struct DirSource {
    root: PathBuf,
    layout: Layout,
    frames: Vec<PathBuf>,
    cursor: AtomicUsize,
}

impl DirSource {
    pub fn fixture(dir: impl Into<PathBuf>) -> Self {
        let root = dir.into();
        let mut frames: Vec<PathBuf> = fs::read_dir(root.join("frames"))
            .map(|rd| rd.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_dir()).collect())
            .unwrap_or_default();
        frames.sort();
        DirSource { root, layout: Layout::Fixture, frames, cursor: AtomicUsize::new(0) }
    }

    /// The running system (`/proc` and `/sys`).
    pub fn live() -> Self {
        Self::live_at("/")
    }

    /// A live-style tree rooted somewhere other than `/`.
    pub fn live_at(root: impl Into<PathBuf>) -> Self {
        DirSource { root: root.into(), layout: Layout::Live, frames: Vec::new(), cursor: AtomicUsize::new(0) }
    }

    fn live_path(file: StatFile) -> &'static str {
        match file {
            StatFile::Hostname => "proc/sys/kernel/hostname",
            StatFile::CpuIdentity => "proc/cpuinfo",
            StatFile::CpuCounters => "proc/stat",
            StatFile::MemInfo => "proc/meminfo",
            StatFile::NetCounters => "proc/net/dev",
            StatFile::Addresses => "proc/net/fib_trie",
            StatFile::NicInfo => "sys/class/net",
        }
    }

    fn read_live(&self, file: StatFile) -> Result<String, NodeError> {
        match file {
            StatFile::Addresses => {
                let v4 = read_path(&self.root.join("proc/net/fib_trie"), file);
                let v6 = read_path(&self.root.join("proc/net/if_inet6"), file);
                match (v4, v6) {
                    (Err(e), Err(_)) => Err(e),
                    (a, b) => Ok(format!("{}\n{}", a.unwrap_or_default(), b.unwrap_or_default())),
                }
            }
            StatFile::NicInfo => self.synthesize_nic_info(),
            _ => read_path(&self.root.join(Self::live_path(file)), file),
        }
    }

    /// Render `/sys/class/net` in the fixture `nic_info` line format.
    fn synthesize_nic_info(&self) -> Result<String, NodeError> {
        let dir = self.root.join(Self::live_path(StatFile::NicInfo));
        let rd = fs::read_dir(&dir).map_err(|_| NodeError::SourceMissing(StatFile::NicInfo.file_name().to_owned()))?;
        let mut names: Vec<String> = rd.filter_map(Result::ok).map(|e| e.file_name().to_string_lossy().into_owned()).collect();
        names.sort();
        let attr = |name: &str, key: &str| {
            fs::read_to_string(dir.join(name).join(key))
                .ok()
                .map(|s| s.trim().to_owned())
                .filter(|s| !s.is_empty())
        };
        let mut out = String::new();
        for name in names {
            let mac = attr(&name, "address").unwrap_or_else(|| "-".into());
            let speed = attr(&name, "speed").filter(|s| !s.starts_with('-')).unwrap_or_else(|| "-".into());
            let state = attr(&name, "operstate").unwrap_or_else(|| "-".into());
            out.push_str(&format!("{name} {mac} {speed} {state}\n"));
        }
        Ok(out)
    }
}

impl StatsSource for DirSource {
    fn read(&self, file: StatFile) -> Result<String, NodeError> {
        match self.layout {
            Layout::Live => self.read_live(file),
            Layout::Fixture => {
                if file.is_counter() && !self.frames.is_empty() {
                    let idx = self.cursor.load(Ordering::SeqCst).min(self.frames.len() - 1);
                    let framed = self.frames[idx].join(file.file_name());
                    if framed.exists() {
                        return read_path(&framed, file);
                    }
                }
                read_path(&self.root.join(file.file_name()), file)
            }
        }
    }

    fn advance(&self) {
        self.cursor.fetch_add(1, Ordering::SeqCst);
    }
}

/// In-memory source: fixed static files plus a scripted list of counter
/// frames, one per snapshot (the last frame repeats once exhausted).
#[derive(Debug, Default)]
pub struct MemorySource {
    pub statics: BTreeMap<StatFile, String>,
    pub frames: Vec<BTreeMap<StatFile, String>>,
    cursor: AtomicUsize,
}

impl MemorySource {
    pub fn new(statics: BTreeMap<StatFile, String>, frames: Vec<BTreeMap<StatFile, String>>) -> Self {
        MemorySource { statics, frames, cursor: AtomicUsize::new(0) }
    }
}

impl StatsSource for MemorySource {
    fn read(&self, file: StatFile) -> Result<String, NodeError> {
        if file.is_counter() && !self.frames.is_empty() {
            let idx = self.cursor.load(Ordering::SeqCst).min(self.frames.len() - 1);
            if let Some(s) = self.frames[idx].get(&file) {
                return Ok(s.clone());
            }
        }
        self.statics
            .get(&file)
            .cloned()
            .ok_or_else(|| NodeError::SourceMissing(file.file_name().to_owned()))
    }

    fn advance(&self) {
        self.cursor.fetch_add(1, Ordering::SeqCst);
    }
}

fn parse_failure(file: StatFile, line: usize) -> NodeError {
    NodeError::ParseFailure { file: file.file_name().to_owned(), line }
}

/// `(core_count, model)` from cpuinfo-style `key : value` stanzas.
pub(crate) fn parse_cpu_identity(text: &str) -> Result<(u32, Option<String>), NodeError> {
    let mut cores = 0u32;
    let mut model = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once(':') else { continue };
        let key = key.trim();
        let value = value.trim();
        if key == "processor" {
            cores += 1;
        } else if model.is_none() && matches!(key, "model name" | "cpu model" | "Hardware" | "cpu") && !value.is_empty() {
            model = Some(value.to_owned());
        }
    }
    if cores == 0 {
        return Err(parse_failure(StatFile::CpuIdentity, 0));
    }
    Ok((cores, model))
}

/// `(busy, total)` ticks from the aggregate `cpu` line of a stat file.
/// Total is the sum of the first eight columns (guest time is already
/// folded into user time); idle is `idle + iowait`.
pub(crate) fn parse_cpu_counters(text: &str) -> Result<(u64, u64), NodeError> {
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        if fields.next() != Some("cpu") {
            continue;
        }
        let values: Vec<u64> = fields
            .take(8)
            .map(|f| f.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_failure(StatFile::CpuCounters, i + 1))?;
        if values.len() < 4 {
            return Err(parse_failure(StatFile::CpuCounters, i + 1));
        }
        let total = values.iter().try_fold(0u64, |acc, v| acc.checked_add(*v));
        let total = total.ok_or_else(|| parse_failure(StatFile::CpuCounters, i + 1))?;
        let idle = values[3].saturating_add(values.get(4).copied().unwrap_or(0));
        return Ok((total.saturating_sub(idle), total));
    }
    Err(parse_failure(StatFile::CpuCounters, 0))
}

/// `(total, available)` bytes from a meminfo-style file.
pub(crate) fn parse_mem_info(text: &str) -> Result<(u64, u64), NodeError> {
    let mut fields: BTreeMap<&str, u64> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| parse_failure(StatFile::MemInfo, i + 1))?;
        let mut parts = rest.split_whitespace();
        let value: u64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_failure(StatFile::MemInfo, i + 1))?;
        let scale = match parts.next() {
            None => 1,
            Some(u) if u.eq_ignore_ascii_case("kb") => 1024,
            Some(u) if u.eq_ignore_ascii_case("mb") => 1024 * 1024,
            Some(_) => return Err(parse_failure(StatFile::MemInfo, i + 1)),
        };
        fields.insert(key.trim(), value.saturating_mul(scale));
    }
    let total = *fields.get("MemTotal").ok_or_else(|| parse_failure(StatFile::MemInfo, 0))?;
    let available = match fields.get("MemAvailable") {
        Some(a) => *a,
        None => ["MemFree", "Buffers", "Cached"].iter().map(|k| fields.get(k).copied().unwrap_or(0)).sum(),
    };
    Ok((total, available))
}

/// Per-interface `(name, rx_bytes, tx_bytes)` from a net/dev-style table.
pub(crate) fn parse_net_counters(text: &str) -> Result<Vec<(String, u64, u64)>, NodeError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.contains('|') || line.trim().is_empty() {
            continue;
        }
        let (name, rest) = line.split_once(':').ok_or_else(|| parse_failure(StatFile::NetCounters, i + 1))?;
        let values: Vec<u64> = rest
            .split_whitespace()
            .map(|f| f.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_failure(StatFile::NetCounters, i + 1))?;
        if values.len() < 9 {
            return Err(parse_failure(StatFile::NetCounters, i + 1));
        }
        out.push((name.trim().to_owned(), values[0], values[8]));
    }
    Ok(out)
}

fn is_loopback(ip: &IpAddr) -> bool {
    ip.is_loopback()
}

/// Addresses from `iface addr[/len]` lines, a fib_trie dump, or if_inet6
/// rows. Loopback addresses are dropped; output is sorted and unique.
pub(crate) fn parse_addresses(text: &str) -> Vec<String> {
    let mut found: Vec<IpAddr> = Vec::new();
    let mut candidate: Option<IpAddr> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("|-- ").or_else(|| trimmed.strip_prefix("+-- ")) {
            candidate = rest.split('/').next().and_then(|s| s.trim().parse().ok());
            continue;
        }
        if trimmed.contains("host LOCAL") {
            if let Some(ip) = candidate.take() {
                found.push(ip);
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() == 6 && tokens[0].len() == 32 && tokens[0].chars().all(|c| c.is_ascii_hexdigit()) {
            if let Ok(bits) = u128::from_str_radix(tokens[0], 16) {
                found.push(IpAddr::V6(Ipv6Addr::from(bits)));
            }
            continue;
        }
        if let Some(ip) = tokens.last().and_then(|t| t.split('/').next()).and_then(|t| t.parse::<IpAddr>().ok()) {
            found.push(ip);
        }
    }
    let mut out: Vec<String> = found.into_iter().filter(|ip| !is_loopback(ip)).map(|ip| ip.to_string()).collect();
    out.sort();
    out.dedup();
    out
}

/// `name mac speed_mbps state` lines, `-` for unknown.
pub(crate) fn parse_nic_info(text: &str) -> Result<Vec<Nic>, NodeError> {
    let known = |s: &str| (s != "-").then(|| s.to_owned());
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 4 {
            return Err(parse_failure(StatFile::NicInfo, i + 1));
        }
        let speed_mbps = match tokens[2] {
            "-" => None,
            s => Some(s.parse().map_err(|_| parse_failure(StatFile::NicInfo, i + 1))?),
        };
        out.push(Nic {
            name: tokens[0].to_owned(),
            mac: known(tokens[1]),
            speed_mbps,
            up: tokens[3].eq_ignore_ascii_case("up"),
        });
    }
    Ok(out)
}

fn optional(r: Result<String, NodeError>) -> Result<Option<String>, NodeError> {
    match r {
        Ok(s) => Ok(Some(s)),
        Err(NodeError::SourceMissing(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Static hardware description of the node behind `src`.
///
/// `hostname`, `cpu_identity` and `mem_info` are required; network
/// counters, addresses and NIC details are optional.
pub fn probe_static(src: &dyn StatsSource) -> Result<NodeProfile, NodeError> {
    let hostname = src.read(StatFile::Hostname)?.trim().to_owned();
    if hostname.is_empty() {
        return Err(parse_failure(StatFile::Hostname, 1));
    }
    let (core_count, cpu_model) = parse_cpu_identity(&src.read(StatFile::CpuIdentity)?)?;
    let (ram_bytes, _) = parse_mem_info(&src.read(StatFile::MemInfo)?)?;

    let mut nics: BTreeMap<String, Nic> = BTreeMap::new();
    if let Some(text) = optional(src.read(StatFile::NetCounters))? {
        for (name, _, _) in parse_net_counters(&text)? {
            if name != "lo" {
                nics.insert(name.clone(), Nic { name, mac: None, speed_mbps: None, up: false });
            }
        }
    }
    if let Some(text) = optional(src.read(StatFile::NicInfo))? {
        for nic in parse_nic_info(&text)? {
            if nic.name != "lo" {
                nics.insert(nic.name.clone(), nic);
            }
        }
    }
    let ip_addresses = optional(src.read(StatFile::Addresses))?.map(|t| parse_addresses(&t)).unwrap_or_default();

    Ok(NodeProfile { hostname, ip_addresses, cpu_model, core_count, ram_bytes, nics: nics.into_values().collect() })
}
