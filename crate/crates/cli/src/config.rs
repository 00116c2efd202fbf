//! Layered settings: command-line flag, then `WFMON_<KEY>` environment
//! variable, then config file, then built-in default.
//!
//! The config file is line-oriented `key = value`; `#` starts a comment.
//! Its path comes from `--config` or `WFMON_CONFIG`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const ENV_PREFIX: &str = "WFMON_";
pub const CONFIG_ENV: &str = "WFMON_CONFIG";

/// Every recognised key with its default (as text) and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("output", "-", "primary output path of the subcommand; - is standard output"),
    ("ingest_format", "jsonl", "ingest input format: jsonl or trace"),
    ("series_format", "jsonl", "sample output format: jsonl or csv"),
    ("checksum", "true", "compute SHA-256 checksums when scanning"),
    ("checksum_cap_bytes", "67108864", "largest file that gets a checksum"),
    ("stats_source", "live", "stats source directory, or live for the running system"),
    ("interval_ms", "1000", "sampler interval"),
    ("max_samples", "0", "stop sampling after this many samples; 0 means no limit"),
    ("duration_ms", "0", "stop sampling after this long; 0 means no limit"),
    ("dot_output", "watch.dot", "DOT snapshot path written by watch"),
    ("refresh_ms", "2000", "watch snapshot cadence"),
    ("idle_timeout_ms", "10000", "watch gives up after this long without new data"),
    ("snapshot_dir", "", "if set, watch also keeps every snapshot here"),
    ("series_template", ".wfmon/{task_id}.series.jsonl", "series file path template"),
    ("monitor_command", "wfmon sample --output \"$WFMON_SERIES\"", "command started by the wrapper hook"),
    ("marker_id", "wfmon", "hook marker id"),
    ("seed", "42", "simulator seed"),
    ("tasks", "20", "simulated task count"),
    ("machines", "4", "simulated machine count"),
    ("shape", "layered-random", "simulated DAG shape: chain, fork-join, layered-random"),
    ("duration_min_s", "1", "shortest simulated task"),
    ("duration_max_s", "60", "longest simulated task"),
    ("files_min", "1", "fewest outputs per simulated task"),
    ("files_max", "3", "most outputs per simulated task"),
    ("failure_rate", "0", "fraction of simulated tasks that fail"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Syntax { path: PathBuf, line: usize },
    UnknownKey { path: PathBuf, line: usize, key: String },
    BadValue { key: String, origin: Level, value: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read config file {}: {message}", path.display()),
            ConfigError::Syntax { path, line } => write!(f, "{}:{line}: expected `key = value`", path.display()),
            ConfigError::UnknownKey { path, line, key } => write!(f, "{}:{line}: unknown key {key:?}", path.display()),
            ConfigError::BadValue { key, origin, value, message } => {
                write!(f, "invalid value {value:?} for {} ({origin}): {message}", display_key(key, *origin))
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn display_key(key: &str, origin: Level) -> String {
    match origin {
        Level::Flag => format!("--{}", key.replace('_', "-")),
        Level::Env => env_name(key),
        Level::File | Level::Default => key.to_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Default,
    File,
    Env,
    Flag,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Default => "default",
            Level::File => "config file",
            Level::Env => "environment",
            Level::Flag => "command line",
        })
    }
}

pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())
}

fn default_of(key: &str) -> &'static str {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d).unwrap_or_else(|| panic!("unregistered key {key}"))
}

/// Parse config file text into key/value pairs.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { path: path.to_owned(), line: i + 1 })?;
        let key = key.trim();
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(ConfigError::UnknownKey { path: path.to_owned(), line: i + 1, key: key.to_owned() });
        }
        out.insert(key.to_owned(), unquote(value.trim()).to_owned());
    }
    Ok(out)
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    env: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(file: BTreeMap<String, String>, env: &BTreeMap<String, String>) -> Self {
        Settings { file, env: env.clone() }
    }

    /// Load the config file named by `flag` or, failing that, `WFMON_CONFIG`.
    pub fn load(flag: Option<&Path>, env: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let path = flag.map(Path::to_path_buf).or_else(|| env.get(CONFIG_ENV).map(PathBuf::from));
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| ConfigError::Io { path: p.clone(), message: e.to_string() })?;
                parse_config(&text, &p)?
            }
            None => BTreeMap::new(),
        };
        Ok(Settings::new(file, env))
    }

    /// Raw winning text for `key` below the flag level, and where it came from.
    fn lower(&self, key: &str) -> (String, Level) {
        if let Some(v) = self.env.get(&env_name(key)) {
            (v.clone(), Level::Env)
        } else if let Some(v) = self.file.get(key) {
            (v.clone(), Level::File)
        } else {
            (default_of(key).to_owned(), Level::Default)
        }
    }

    /// Effective value of `key`; `flag` wins when given.
    pub fn resolve<T>(&self, key: &str, flag: Option<T>) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.resolve_with_level(key, flag).map(|(v, _)| v)
    }

    pub fn resolve_with_level<T>(&self, key: &str, flag: Option<T>) -> Result<(T, Level), ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if let Some(v) = flag {
            return Ok((v, Level::Flag));
        }
        let (text, level) = self.lower(key);
        text.parse::<T>()
            .map(|v| (v, level))
            .map_err(|e| ConfigError::BadValue { key: key.to_owned(), origin: level, value: text, message: e.to_string() })
    }

    pub fn flag_bool(&self, key: &str, flag: Option<bool>) -> Result<bool, ConfigError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        let (text, level) = self.lower(key);
        parse_bool(&text)
            .ok_or_else(|| ConfigError::BadValue { key: key.to_owned(), origin: level, value: text, message: "expected true or false".into() })
    }

    /// Text value where an empty string means unset.
    pub fn optional(&self, key: &str, flag: Option<String>) -> Option<String> {
        let v = flag.unwrap_or_else(|| self.lower(key).0);
        (!v.is_empty()).then_some(v)
    }
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn every_key_has_a_parseable_default() {
        let s = Settings::default();
        for (key, default, _) in KEYS {
            assert_eq!(s.resolve::<String>(key, None).unwrap(), *default);
        }
        assert_eq!(s.resolve::<u64>("interval_ms", None).unwrap(), 1000);
        assert!(s.flag_bool("checksum", None).unwrap());
    }

    #[test]
    fn precedence_for_every_key() {
        let path = Path::new("test.conf");
        for (key, _, _) in KEYS {
            let file = parse_config(&format!("{key} = from-file\n"), path).unwrap();
            let only_file = Settings::new(file.clone(), &BTreeMap::new());
            assert_eq!(only_file.resolve_with_level::<String>(key, None).unwrap(), ("from-file".into(), Level::File));

            let with_env = Settings::new(file, &env(&[(&env_name(key), "from-env")]));
            assert_eq!(with_env.resolve_with_level::<String>(key, None).unwrap(), ("from-env".into(), Level::Env));
            assert_eq!(
                with_env.resolve_with_level(key, Some("from-flag".to_string())).unwrap(),
                ("from-flag".into(), Level::Flag)
            );
        }
    }

    #[test]
    fn config_file_syntax() {
        let p = Path::new("c");
        let parsed = parse_config("# comment\n\nseed = 7 # trailing\nshape=\"chain\"\n", p).unwrap();
        assert_eq!(parsed["seed"], "7");
        assert_eq!(parsed["shape"], "chain");
        assert_eq!(parse_config("seed 7\n", p), Err(ConfigError::Syntax { path: p.into(), line: 1 }));
        assert!(matches!(parse_config("nope = 1\n", p), Err(ConfigError::UnknownKey { line: 1, .. })));
    }

    #[test]
    fn bad_values_name_their_origin() {
        let s = Settings::new(BTreeMap::new(), &env(&[("WFMON_SEED", "x")]));
        let err = s.resolve::<u64>("seed", None).unwrap_err();
        assert!(err.to_string().contains("WFMON_SEED"), "{err}");
        assert_eq!(s.resolve::<u64>("seed", Some(3)).unwrap(), 3);
    }
}
