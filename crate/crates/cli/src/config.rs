//! Scenario configuration files and the preset library.

use std::collections::BTreeSet;
use std::time::Duration;

use toml::Value;
use votecheck_core::channels::Threat;
use votecheck_core::fact::parse_fact;
use votecheck_core::protocol::{ScenarioConfig, World};
use votecheck_core::universe::Universe;
use votecheck_core::{ConfigError, Fact, Name};

pub const PRESETS: [&str; 5] = [
    "restricted-holds",
    "full-dy-fails",
    "corrupt-pod",
    "corrupt-authority",
    "corrupt-wbb-holds",
];

const KEYS: [&str; 18] = [
    "candidates",
    "voters",
    "dishonest",
    "corrupt",
    "threat",
    "world-pair",
    "banned",
    "max_states",
    "max_depth",
    "world",
    "serials",
    "nonces",
    "workers",
    "time_budget_secs",
    "canonical_fresh",
    "ik_serials",
    "receipts_insecure",
    "booth_events",
];

/// A named scenario from the library.
pub fn preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::defaults(2, 3);
    match name {
        "restricted-holds" => {}
        "full-dy-fails" => {
            cfg = ScenarioConfig::defaults(2, 2);
            cfg.threat = Threat::Full;
        }
        "corrupt-pod" => {
            cfg.corrupt.insert(Name::new("podservice"));
        }
        "corrupt-authority" => {
            cfg.corrupt.insert(Name::new("authority"));
        }
        "corrupt-wbb-holds" => {
            cfg.corrupt.insert(Name::new("wbb"));
        }
        _ => {
            return Err(ConfigError::for_key(
                "preset",
                format!("unknown preset '{name}'; choose from {}", PRESETS.join(", ")),
            ))
        }
    }
    Ok(cfg)
}

/// Line of the first assignment to `key`, 1-based.
fn line_of(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        let l = l.trim_start();
        let l = l.strip_prefix('"').unwrap_or(l);
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('=') || rest.starts_with('"'))
    })
    .map(|i| i + 1)
}

fn locate(src: &str, mut e: ConfigError) -> ConfigError {
    if e.line.is_none() {
        if let Some(k) = &e.key {
            e.line = line_of(src, k);
        }
    }
    e
}

fn names(key: &str, v: &Value) -> Result<Vec<Name>, ConfigError> {
    let arr = v
        .as_array()
        .ok_or_else(|| ConfigError::for_key(key, "expected a list of names"))?;
    arr.iter()
        .map(|x| {
            x.as_str()
                .map(Name::new)
                .ok_or_else(|| ConfigError::for_key(key, format!("expected a name, found {x}")))
        })
        .collect()
}

fn string<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| ConfigError::for_key(key, "expected a string"))
}

fn count(key: &str, v: &Value) -> Result<usize, ConfigError> {
    match v.as_integer() {
        Some(n) if n > 0 => Ok(n as usize),
        _ => Err(ConfigError::for_key(key, "expected a positive integer")),
    }
}

fn flag(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| ConfigError::for_key(key, "expected true or false"))
}

pub fn parse_threat(s: &str) -> Result<Threat, ConfigError> {
    match s {
        "restricted" => Ok(Threat::Restricted),
        "full" => Ok(Threat::Full),
        _ => Err(ConfigError::for_key("threat", format!("'{s}' is not one of restricted, full"))),
    }
}

/// Parse fact expressions against the universe `cfg` describes.
pub fn parse_banned(cfg: &ScenarioConfig, exprs: &[String]) -> Result<Vec<Fact>, ConfigError> {
    let u = Universe::build(&cfg.atoms())?;
    exprs
        .iter()
        .map(|s| {
            let f = parse_fact(s, &u).map_err(|e| ConfigError::for_key("banned", e.to_string()))?;
            if !u.in_fact_space(&f) {
                return Err(ConfigError::for_key("banned", format!("{f} is not a fact of this scenario")));
            }
            Ok(f)
        })
        .collect()
}

/// Parse a configuration document on top of `base`.
pub fn parse_config_str(src: &str, base: ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
    let table: toml::Table = src.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| src[..s.start].matches('\n').count() + 1);
        let mut err = ConfigError::new(e.message().to_string());
        err.line = line;
        err
    })?;
    apply(&table, base).map_err(|e| locate(src, e))
}

/// Read and parse a configuration file on top of `base`.
pub fn parse_config(path: &std::path::Path, base: ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&src, base)
}

fn apply(t: &toml::Table, base: ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
    for k in t.keys() {
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::for_key(k, "unknown key"));
        }
    }
    let get = |k: &str| t.get(k);
    let candidates = get("candidates").map(|v| names("candidates", v)).transpose()?;
    let voters = get("voters").map(|v| names("voters", v)).transpose()?;
    let mut cfg = base;
    if candidates.is_some() || voters.is_some() {
        // atom lists are re-derived so their sizes follow the new counts
        let c = candidates.as_ref().map_or(cfg.candidates.len(), Vec::len);
        let v = voters.as_ref().map_or(cfg.voters.len(), Vec::len);
        let mut fresh = ScenarioConfig::defaults(c.min(4), v.min(4));
        fresh.threat = cfg.threat;
        fresh.corrupt = cfg.corrupt.clone();
        fresh.limits = cfg.limits.clone();
        fresh.candidates = candidates.unwrap_or(cfg.candidates.clone());
        if let Some(vs) = voters {
            fresh.dishonest = if vs.len() >= 3 {
                vs.last().cloned().into_iter().collect()
            } else {
                BTreeSet::new()
            };
            fresh.voters = vs;
        } else {
            fresh.voters = cfg.voters.clone();
            fresh.dishonest = cfg.dishonest.clone();
        }
        if c > 4 || v > 4 {
            Universe::build(&fresh.atoms())?;
        }
        cfg = fresh;
    }
    if let Some(v) = get("serials") {
        cfg.serials = names("serials", v)?;
    }
    if let Some(v) = get("nonces") {
        cfg.nonces = names("nonces", v)?;
    }
    if let Some(v) = get("threat") {
        cfg.threat = parse_threat(string("threat", v)?)?;
    }
    if let Some(v) = get("dishonest") {
        cfg.dishonest = names("dishonest", v)?.into_iter().collect();
    }
    if let Some(v) = get("corrupt") {
        cfg.corrupt = names("corrupt", v)?.into_iter().collect();
    }
    if let Some(v) = get("world") {
        cfg.world = match string("world", v)? {
            "prime" => World::Prime,
            "doubleprime" => World::Doubleprime,
            s => return Err(ConfigError::for_key("world", format!("'{s}' is not one of prime, doubleprime"))),
        };
    }
    if let Some(v) = get("world-pair") {
        match names("world-pair", v)?.as_slice() {
            [a, b] => cfg.world_pair = Some((a.clone(), b.clone())),
            _ => return Err(ConfigError::for_key("world-pair", "expected exactly two voters")),
        }
    }
    if let Some(v) = get("max_states") {
        cfg.limits.max_states = count("max_states", v)?;
    }
    if let Some(v) = get("max_depth") {
        cfg.limits.max_depth = count("max_depth", v)?;
    }
    if let Some(v) = get("workers") {
        cfg.limits.workers = count("workers", v)?;
    }
    if let Some(v) = get("time_budget_secs") {
        cfg.limits.time_budget = Some(Duration::from_secs(count("time_budget_secs", v)? as u64));
    }
    for (k, slot) in [
        ("canonical_fresh", &mut cfg.canonical_fresh),
        ("ik_serials", &mut cfg.ik_serials),
        ("receipts_insecure", &mut cfg.receipts_insecure),
        ("booth_events", &mut cfg.booth_events),
    ] {
        if let Some(v) = t.get(k) {
            *slot = flag(k, v)?;
        }
    }
    if let Some(v) = get("banned") {
        let arr = v
            .as_array()
            .ok_or_else(|| ConfigError::for_key("banned", "expected a list of fact expressions"))?;
        let exprs = arr
            .iter()
            .map(|x| string("banned", x).map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        cfg.banned = parse_banned(&cfg, &exprs)?;
    }
    cfg.validate()?;
    Universe::build(&cfg.atoms())?;
    Ok(cfg)
}
