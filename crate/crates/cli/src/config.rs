//! `--config FILE` support: `key = value` lines whose keys are long flag
//! names. Flags given on the command line win over the file.

use std::collections::BTreeMap;

use clap::{ArgAction, Command};

use crate::CliError;

/// Parses `key = value` lines; `#` starts a comment, `-` and `_` are
/// interchangeable in keys.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn present(args: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    let with_eq = format!("--{long}=");
    args.iter().any(|a| *a == flag || a.starts_with(&with_eq))
}

/// Appends the config file's settings to `args` for every flag the command
/// line does not already set.
pub fn merge_config(cmd: &Command, args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
    let entries = parse_config(&text)?;
    let sub = args
        .iter()
        .skip(1)
        .find_map(|a| cmd.get_subcommands().find(|s| s.get_name() == a || s.get_all_aliases().any(|al| al == a)));
    let mut out = args.clone();
    for (key, value) in entries {
        if key == "config" || present(&args, &key) {
            continue;
        }
        let arg = sub
            .and_then(|s| s.get_arguments().find(|a| a.get_long() == Some(key.as_str())))
            .or_else(|| cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())))
            .ok_or_else(|| CliError::Config(format!("unknown key {key:?} for this subcommand")))?;
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "1" | "yes" => out.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => return Err(CliError::Config(format!("{key}: expected a boolean, got {other:?}"))),
            },
            ArgAction::Append => {
                for v in value.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                    out.push(format!("--{key}"));
                    out.push(v.to_string());
                }
            }
            _ => {
                out.push(format!("--{key}"));
                out.push(value);
            }
        }
    }
    Ok(out)
}
