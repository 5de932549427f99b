//! Layered settings: built-in defaults, then a TOML file, then `--set`
//! overrides, then the dedicated flags of each command.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use viper_core::servo::ServoConfig;
use viper_core::synthworld::{DatasetConfig, WorldConfig};
use viper_core::training::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub servo: ServoConfig,
    pub ablation: AblationSettings,
    pub bench: BenchSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            dataset: DatasetConfig {
                world: WorldConfig::default().with_image_size(64),
                ..Default::default()
            },
            train: TrainConfig::default(),
            servo: ServoConfig::default(),
            ablation: AblationSettings::default(),
            bench: BenchSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSettings {
    /// Training runs per flag combination; run `i` uses seed `train.seed + i`.
    pub runs: usize,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings { runs: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings { trials: 100, seed: 1 }
    }
}

/// Recursively overlays `top` onto `base`. Tables merge key by key; any
/// other value replaces what was there.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `a.b.c=value`. The value is read as a TOML literal when it is one
/// (`3`, `1e-3`, `true`, `[1, 2]`) and as a bare string otherwise.
fn parse_override(arg: &str) -> CliResult<(Vec<String>, Value)> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {arg:?}")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Usage(format!("malformed settings key {key:?}")));
    }
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn insert_path(root: &mut Table, path: &[String], value: Value) -> CliResult<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for (i, key) in parents.iter().enumerate() {
        let entry = table.entry(key.clone()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Usage(format!("{} is not a table", path[..=i].join(".")))),
        };
    }
    table.insert(last.clone(), value);
    Ok(())
}

pub fn load(file: Option<&Path>, overrides: &[String]) -> CliResult<Settings> {
    let Value::Table(mut root) =
        Value::try_from(Settings::default()).map_err(|e| CliError::Runtime(format!("default settings: {e}")))?
    else {
        unreachable!("settings serialize to a table")
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let table: Table = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        merge(&mut root, table);
    }
    for arg in overrides {
        let (path, value) = parse_override(arg)?;
        insert_path(&mut root, &path, value)?;
    }
    let mut unknown = Vec::new();
    let settings: Settings = serde_ignored::deserialize(Value::Table(root), |p| unknown.push(p.to_string()))
        .map_err(|e| CliError::Usage(format!("invalid settings: {e}")))?;
    if !unknown.is_empty() {
        return Err(CliError::Usage(format!("unknown settings: {}", unknown.join(", "))));
    }
    Ok(settings)
}
