//! Run configuration: a line-oriented `key = value` file with `[section]`
//! headers. `#` starts a comment. Every section and key must be known;
//! anything else is rejected with its line number.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Known sections and their keys.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["out", "seed", "threads", "quant_mode"]),
    ("error-sweep", &["phases", "bits", "amp_floor_dbfs", "amp_step_db", "phase_samples"]),
    ("contours", &["cases", "levels", "tolerance"]),
    (
        "efficiency",
        &[
            "vdd", "r_opt", "f0", "bits", "phases", "q_nw", "c_unit", "weights", "amp_floor_dbfs", "amp_step_db",
            "phase_samples",
        ],
    ),
    (
        "beam",
        &[
            "elements", "spacing", "phases", "bits", "model", "table", "codes_per_turn", "calibrate", "taper",
            "pattern_steer_deg", "pattern_step_deg", "sweep_start_deg", "sweep_stop_deg", "sweep_step_deg",
        ],
    ),
    (
        "modulate",
        &[
            "scheme", "order", "bandwidth", "sample_rate", "samples", "occupied_fraction", "fft_size", "rolloff",
            "detrough", "mode", "phases", "bits", "phase_bandwidth", "am_delay", "welch_segment", "welch_overlap",
        ],
    ),
    ("vectors", &["phases", "amp_bits", "phase_bits", "active_bits", "steps", "relatch_every"]),
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = ConfigFile::default();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(line, format!("unterminated section header `{body}`")))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(CliError::config(line, format!("unknown section `{name}`")));
                }
                if cfg.sections.contains_key(name) {
                    return Err(CliError::config(line, format!("section `{name}` appears twice")));
                }
                cfg.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) =
                body.split_once('=').ok_or_else(|| CliError::config(line, format!("expected `key = value`, got `{body}`")))?;
            let key = key.trim();
            let section = current.as_deref().ok_or_else(|| CliError::config(line, format!("key `{key}` outside a section")))?;
            let keys = SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !keys.contains(&key) {
                return Err(CliError::config(line, format!("unknown key `{key}` in [{section}]")));
            }
            let map = cfg.sections.get_mut(section).expect("section inserted on header");
            if map.contains_key(key) {
                return Err(CliError::config(line, format!("duplicate key `{key}` in [{section}]")));
            }
            map.insert(key.to_string(), Entry { value: value.trim().to_string(), line });
        }
        Ok(cfg)
    }

    pub fn section(&self, name: &'static str) -> Section<'_> {
        Section { name, entries: self.sections.get(name) }
    }
}

/// Typed view of one section; missing sections read as empty.
#[derive(Debug, Clone, Copy)]
pub struct Section<'a> {
    name: &'static str,
    entries: Option<&'a BTreeMap<String, Entry>>,
}

impl Section<'_> {
    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.and_then(|m| m.get(key))
    }

    pub fn has(&self, key: &str) -> bool {
        self.entry(key).is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_none_or(BTreeMap::is_empty)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.entry(key)
            .map(|e| {
                e.value
                    .parse::<T>()
                    .map_err(|err| CliError::config(e.line, format!("[{}] {key} = `{}`: {err}", self.name, e.value)))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    /// Comma-separated list; an empty value gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entry(key) else { return Ok(None) };
        if e.value.is_empty() {
            return Ok(Some(Vec::new()));
        }
        e.value
            .split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<T>()
                    .map_err(|err| CliError::config(e.line, format!("[{}] {key}: item `{item}`: {err}", self.name)))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    pub fn line(&self, key: &str) -> usize {
        self.entry(key).map_or(0, |e| e.line)
    }
}
