//! `--config` files: `key=value` lines whose keys are long flag names of the
//! chosen subcommand. Values are spliced into the argument list before
//! parsing, so flags given on the command line win.

use std::path::Path;

use clap::Command;

pub const CONFIG_FLAG: &str = "--config";

/// Removes `--config <file>` / `--config=<file>` from `args`, returning the path.
fn take_config_path(args: &mut Vec<String>) -> Result<Option<String>, String> {
    let Some(i) = args.iter().position(|a| a == CONFIG_FLAG || a.starts_with("--config=")) else {
        return Ok(None);
    };
    let arg = args.remove(i);
    if let Some(v) = arg.strip_prefix("--config=") {
        return Ok(Some(v.to_string()));
    }
    if i < args.len() {
        Ok(Some(args.remove(i)))
    } else {
        Err("--config needs a file path".into())
    }
}

pub fn parse_pairs(text: &str, source: &Path) -> Result<Vec<(String, String)>, String> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key=value", source.display(), n + 1))?;
        let k = k.trim().to_string();
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(format!("{}:{}: duplicate key {k:?}", source.display(), n + 1));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

fn flag_given(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let eq = format!("--{key}=");
    args.iter().any(|a| *a == long || a.starts_with(&eq))
}

/// Expands a `--config` file into flags. `cmd` is the full command
/// definition, used to check keys against the subcommand's flags.
pub fn expand(mut args: Vec<String>, cmd: &Command) -> Result<Vec<String>, String> {
    let Some(path) = take_config_path(&mut args)? else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let pairs = parse_pairs(&text, path)?;
    let sub_name = args
        .iter()
        .skip(1)
        .find(|a| !a.starts_with('-'))
        .ok_or("--config needs a subcommand")?
        .clone();
    let sub = cmd
        .find_subcommand(&sub_name)
        .ok_or_else(|| format!("unknown subcommand {sub_name:?}"))?;
    for (k, v) in pairs {
        let known = sub
            .get_arguments()
            .any(|a| a.get_long() == Some(k.as_str()) && a.get_id() != "config");
        if !known {
            return Err(format!("{}: unknown key {k:?} for {sub_name}", path.display()));
        }
        if !flag_given(&args, &k) {
            args.push(format!("--{k}"));
            args.push(v);
        }
    }
    Ok(args)
}
