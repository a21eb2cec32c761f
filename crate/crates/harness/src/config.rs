//! Run configuration files.
//!
//! A config is a TOML tree. The preset, algorithm and variant named in it
//! select a complete set of defaults; every key present in the file (or in
//! a `--override key=value`) replaces the matching default. Unknown keys are
//! rejected, and the merged result is validated before anything runs.

use anyhow::{bail, Context, Result};
use asn_core::env::{EnvConfig, Preset};
use asn_core::nets::{NetConfig, Variant};
use asn_core::runner::{Algorithm, RunSpec};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Team size used when a marines config does not set `team_sizes`.
pub const DEFAULT_MARINES: usize = 5;

const TOP_LEVEL: [&str; 5] = ["run_id", "seeds", "checkpoint_interval", "record_wall_clock", "run"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label written to every metrics row; also names nothing on disk.
    pub run_id: String,
    pub seeds: Vec<u64>,
    /// Environment steps between checkpoints; 0 keeps only the first and last.
    pub checkpoint_interval: u64,
    /// Write elapsed seconds into the metrics `wall_clock` column. Off by
    /// default so that metrics files are byte-reproducible.
    pub record_wall_clock: bool,
    pub run: RunSpec,
}

impl RunConfig {
    /// Defaults for one (preset, algorithm, variant) combination. Value
    /// methods get a recurrent agent network; policy methods do not.
    pub fn defaults(preset: Preset, algorithm: Algorithm, variant: Variant) -> Self {
        let env = match preset {
            Preset::Mmo => EnvConfig::mmo(),
            Preset::Marines => EnvConfig::marines(DEFAULT_MARINES),
        };
        let net = NetConfig::new(variant).recurrent(algorithm.is_value());
        Self {
            run_id: format!("{}-{}", variant.name(), algorithm.name()),
            seeds: vec![0],
            checkpoint_interval: 0,
            record_wall_clock: false,
            run: RunSpec::new(env, net, algorithm),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            bail!("run_id must not be empty");
        }
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("seeds must be distinct");
        }
        self.run.validate().context("invalid run section")?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    /// Parses a config file's text, applies `overrides` (`dotted.key=value`)
    /// and validates the result.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut raw: Table = text.parse().context("config is not valid TOML")?;
        for o in overrides {
            apply_override(&mut raw, o)?;
        }
        let preset: Preset = pick(&raw, &["run", "env", "preset"])?.unwrap_or(Preset::Mmo);
        let algorithm: Algorithm = pick(&raw, &["run", "algorithm"])?.unwrap_or(Algorithm::Iql);
        let variant: Variant = pick(&raw, &["run", "net", "variant"])?.unwrap_or(default_variant(preset));
        let mut base = Self::defaults(preset, algorithm, variant);
        if algorithm.is_value() {
            // the value section's own tag follows the top-level algorithm
            base.run.value.algo = match algorithm {
                Algorithm::Vdn => asn_core::algos::ValueAlgo::Vdn,
                Algorithm::Qmix => asn_core::algos::ValueAlgo::Qmix,
                _ => asn_core::algos::ValueAlgo::Iql,
            };
        }
        let mut merged = match Value::try_from(&base).context("serializing defaults")? {
            Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        };
        merge(&mut merged, raw, "")?;
        let config: RunConfig = Value::Table(merged).try_into().context("config does not match the schema")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in config {}", path.display()))
    }
}

/// The ASN form that fits a preset's action layout.
pub fn default_variant(preset: Preset) -> Variant {
    match preset {
        Preset::Mmo => Variant::MultiActionShared,
        Preset::Marines => Variant::Homogeneous,
    }
}

fn lookup<'a>(table: &'a Table, path: &[&str]) -> Option<&'a Value> {
    let (last, init) = path.split_last()?;
    let mut t = table;
    for key in init {
        t = t.get(*key)?.as_table()?;
    }
    t.get(*last)
}

fn pick<T: serde::de::DeserializeOwned>(table: &Table, path: &[&str]) -> Result<Option<T>> {
    match lookup(table, path) {
        None => Ok(None),
        Some(v) => v
            .clone()
            .try_into()
            .map(Some)
            .with_context(|| format!("bad value for {}", path.join("."))),
    }
}

/// Overlays `src` onto `dst`. Tables merge key by key; anything else
/// replaces. Integers written where the default is a float are widened.
fn merge(dst: &mut Table, src: Table, prefix: &str) -> Result<()> {
    for (key, value) in src {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (dst.get_mut(&key), value) {
            (Some(Value::Table(d)), Value::Table(s)) => merge(d, s, &path)?,
            (Some(Value::Float(_)), Value::Integer(i)) => {
                dst.insert(key, Value::Float(i as f64));
            }
            (Some(Value::Array(d)), Value::Array(s)) if d.first().is_some_and(Value::is_float) => {
                let widened = s.into_iter().map(|v| if let Value::Integer(i) = v { Value::Float(i as f64) } else { v }).collect();
                dst.insert(key, Value::Array(widened));
            }
            (_, v) => {
                dst.insert(key, v);
            }
        }
    }
    Ok(())
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// `a.b.c=value`; keys that are not top-level config keys are taken
/// relative to the `run` table.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (path, value) = spec
        .split_once('=')
        .with_context(|| format!("override `{spec}` is not of the form key=value"))?;
    let mut keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override `{spec}` has an empty key segment");
    }
    if !TOP_LEVEL.contains(&keys[0]) {
        keys.insert(0, "run");
    }
    let (last, init) = keys.split_last().expect("non-empty");
    let mut t = table;
    for key in init {
        let entry = t.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = match entry {
            Value::Table(inner) => inner,
            _ => bail!("override `{spec}`: `{key}` is not a table"),
        };
    }
    t.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}
