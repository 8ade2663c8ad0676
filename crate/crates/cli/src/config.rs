//! Flat `key = value` run files.
//!
//! Keys are long flag names without the leading dashes (`topics = 10`,
//! `measurement-noise = 0.1`). `#` starts a comment. Switches take `true`
//! or `false`. File values are spliced in front of the command-line flags,
//! so flags given on the command line win.

use clap::{ArgAction, Command};

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key = value", i + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(format!("config line {}: empty key", i + 1));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Turn config entries into flags accepted by `cmd`; unknown keys are errors.
pub fn to_args(entries: &[(String, String)], cmd: &Command) -> Result<Vec<String>, String> {
    let mut args = Vec::new();
    for (key, value) in entries {
        let arg = cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| format!("unknown config key `{key}` for `{}`", cmd.get_name()))?;
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => args.push(format!("--{key}")),
                "false" => {}
                _ => return Err(format!("config key `{key}` takes true or false")),
            },
            ArgAction::Count => {
                let n: usize = value.parse().map_err(|_| format!("config key `{key}` takes a count"))?;
                args.extend(std::iter::repeat_n(format!("--{key}"), n));
            }
            _ => args.push(format!("--{key}={value}")),
        }
    }
    Ok(args)
}
