//! Strict JSON run configuration. A config file is a single object with
//! a `"command"` key naming the subcommand and that subcommand's
//! parameters alongside it; unknown keys are errors, never silently
//! ignored, so typos cannot change a run's meaning. Command-line flags
//! override file values field by field.

use crate::error::{MochError, Result};
use crate::init::CorrectorMode;
use serde_json::Value;
use std::path::{Path, PathBuf};

/// Which estimate families an `estimates` run measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateSuite {
    Products,
    Commutators,
    All,
}

impl std::str::FromStr for EstimateSuite {
    type Err = MochError;
    fn from_str(s: &str) -> Result<EstimateSuite> {
        match s {
            "products" => Ok(EstimateSuite::Products),
            "commutators" => Ok(EstimateSuite::Commutators),
            "all" => Ok(EstimateSuite::All),
            other => Err(MochError::Config(format!(
                "unknown estimate suite `{other}` (expected products, commutators, or all)"
            ))),
        }
    }
}

/// Per-command parameters as found in a config file; every field is
/// optional so command-line flags can fill or override them.
#[derive(Clone, Debug, Default)]
pub struct CommandPatch {
    pub points: Option<usize>,
    pub fields: Option<usize>,
    pub seed: Option<u64>,
    pub init: Option<PathBuf>,
    pub scales: Option<Vec<i32>>,
    pub corrector: Option<CorrectorMode>,
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub dealias: Option<bool>,
    pub out_prefix: Option<String>,
    pub record_every: Option<usize>,
    pub snapshot_every: Option<usize>,
    pub suite: Option<EstimateSuite>,
    pub ensemble: Option<usize>,
    pub max_mode: Option<usize>,
}

/// A parsed config file: the command it names, its parameter patch, and
/// the global output options it may set.
#[derive(Clone, Debug)]
pub struct FileConfig {
    pub command: String,
    pub patch: CommandPatch,
    pub out_dir: Option<PathBuf>,
    pub svg: Option<bool>,
}

pub const COMMANDS: [&str; 7] = [
    "lp-check",
    "norms",
    "gen-init",
    "solve",
    "estimates",
    "sweep",
    "inflate",
];

fn allowed_keys(command: &str) -> Option<&'static [&'static str]> {
    let keys: &[&str] = match command {
        "lp-check" => &["points", "fields", "seed"],
        "norms" => &["init"],
        "gen-init" => &["N", "corrector", "out"],
        "solve" => &[
            "init",
            "lambda",
            "dt",
            "T",
            "dealias",
            "out_prefix",
            "record_every",
            "snapshot_every",
        ],
        "estimates" => &["suite", "ensemble", "seed", "points", "max_mode", "lambda"],
        "sweep" => &["N", "corrector"],
        "inflate" => &["N", "lambda", "dt", "corrector"],
        _ => return None,
    };
    Some(keys)
}

fn config_err(msg: impl Into<String>) -> MochError {
    MochError::Config(msg.into())
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| config_err(format!("`{key}` must be a nonnegative integer")))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    Ok(as_u64(key, v)? as usize)
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| config_err(format!("`{key}` must be a number")))
}

fn as_str<'v>(key: &str, v: &'v Value) -> Result<&'v str> {
    v.as_str()
        .ok_or_else(|| config_err(format!("`{key}` must be a string")))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| config_err(format!("`{key}` must be a boolean")))
}

/// `N` accepts a single integer or a list of integers.
fn as_scales(v: &Value) -> Result<Vec<i32>> {
    let parse_one = |item: &Value| -> Result<i32> {
        item.as_i64()
            .map(|n| n as i32)
            .ok_or_else(|| config_err("`N` entries must be integers"))
    };
    match v {
        Value::Array(items) => {
            if items.is_empty() {
                return Err(config_err("`N` must not be empty"));
            }
            items.iter().map(parse_one).collect()
        }
        other => Ok(vec![parse_one(other)?]),
    }
}

/// Parse a corrector-mode name as it appears in configs and flags.
pub fn corrector_from_str(s: &str) -> Result<CorrectorMode> {
    match s {
        "regular" => Ok(CorrectorMode::Regular),
        "literal" => Ok(CorrectorMode::Literal),
        other => Err(config_err(format!(
            "unknown corrector mode `{other}` (expected regular or literal)"
        ))),
    }
}

fn as_corrector(v: &Value) -> Result<CorrectorMode> {
    corrector_from_str(as_str("corrector", v)?)
}

/// Shared semantic checks, applied both at parse time and after flag
/// merging.
pub fn validate_patch(patch: &CommandPatch) -> Result<()> {
    if let Some(lambda) = patch.lambda {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(config_err("lambda must be nonzero and finite"));
        }
    }
    if let Some(dt) = patch.dt {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(config_err("dt must be positive"));
        }
    }
    if let Some(t) = patch.t_final {
        if !(t.is_finite() && t > 0.0) {
            return Err(config_err("T must be positive"));
        }
    }
    if let Some(scales) = &patch.scales {
        if scales.is_empty() {
            return Err(config_err("`N` must not be empty"));
        }
        if let Some(&bad) = scales.iter().find(|&&n| n <= 0) {
            return Err(config_err(format!("`N` entries must be positive, got {bad}")));
        }
    }
    if patch.points.is_some_and(|p| p == 0) {
        return Err(config_err("`points` must be positive"));
    }
    if patch.ensemble.is_some_and(|e| e == 0) {
        return Err(config_err("`ensemble` must be at least 1"));
    }
    Ok(())
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| config_err(format!("config is not valid JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| config_err("config must be a JSON object"))?;
    let command = as_str(
        "command",
        obj.get("command")
            .ok_or_else(|| config_err("config is missing the `command` key"))?,
    )?
    .to_string();
    let allowed = allowed_keys(&command).ok_or_else(|| {
        config_err(format!(
            "unknown command `{command}` (expected one of {})",
            COMMANDS.join(", ")
        ))
    })?;

    let mut patch = CommandPatch::default();
    let mut out_dir = None;
    let mut svg = None;
    for (key, value) in obj {
        match key.as_str() {
            "command" => {}
            "out_dir" => out_dir = Some(PathBuf::from(as_str(key, value)?)),
            "svg" => svg = Some(as_bool(key, value)?),
            k if allowed.contains(&k) => match k {
                "points" => patch.points = Some(as_usize(k, value)?),
                "fields" => patch.fields = Some(as_usize(k, value)?),
                "seed" => patch.seed = Some(as_u64(k, value)?),
                "init" => patch.init = Some(PathBuf::from(as_str(k, value)?)),
                "N" => patch.scales = Some(as_scales(value)?),
                "corrector" => patch.corrector = Some(as_corrector(value)?),
                "out" => patch.out = Some(PathBuf::from(as_str(k, value)?)),
                "lambda" => patch.lambda = Some(as_f64(k, value)?),
                "dt" => patch.dt = Some(as_f64(k, value)?),
                "T" => patch.t_final = Some(as_f64(k, value)?),
                "dealias" => patch.dealias = Some(as_bool(k, value)?),
                "out_prefix" => patch.out_prefix = Some(as_str(k, value)?.to_string()),
                "record_every" => patch.record_every = Some(as_usize(k, value)?),
                "snapshot_every" => patch.snapshot_every = Some(as_usize(k, value)?),
                "suite" => patch.suite = Some(as_str(k, value)?.parse()?),
                "ensemble" => patch.ensemble = Some(as_usize(k, value)?),
                "max_mode" => patch.max_mode = Some(as_usize(k, value)?),
                _ => unreachable!("key {k} is allowed but unhandled"),
            },
            other => {
                return Err(config_err(format!(
                    "unknown key `{other}` for command `{command}`"
                )))
            }
        }
    }
    validate_patch(&patch)?;
    Ok(FileConfig {
        command,
        patch,
        out_dir,
        svg,
    })
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
