//! `--config` files: JSON objects whose keys are long flag names. Values
//! fill in flags that were not given on the command line.

use std::ffi::OsString;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

/// Returns `argv` with config entries appended as `--key=value` for every
/// key the user did not pass explicitly. A sidecar written by this tool is
/// also accepted; its `params` object is used.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("{path}: cannot read config"))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("{path}: invalid JSON"))?;
    let params = match value {
        Value::Object(mut m) if m.get("params").is_some_and(Value::is_object) => match m.remove("params") {
            Some(Value::Object(p)) => p,
            _ => unreachable!(),
        },
        Value::Object(m) => m,
        _ => bail!("{path}: config must be a JSON object"),
    };
    let mut out = argv.clone();
    out.extend(to_args(&params, &argv)?);
    Ok(out)
}

fn config_path(argv: &[OsString]) -> Option<String> {
    let mut it = argv.iter().filter_map(|a| a.to_str());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(str::to_string);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn given(argv: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    argv.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&eq))
}

fn to_args(params: &Map<String, Value>, argv: &[OsString]) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (key, value) in params {
        let flag = format!("--{}", key.replace('_', "-"));
        if key == "config" || given(argv, &flag) {
            continue;
        }
        let text = match value {
            Value::Null | Value::Bool(false) => continue,
            Value::Bool(true) => {
                out.push(flag.into());
                continue;
            }
            Value::Array(items) => items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(","),
            other => scalar(other)?,
        };
        out.push(format!("{flag}={text}").into());
    }
    Ok(out)
}

fn scalar(v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => bail!("unsupported config value {other}"),
    })
}
