//! `--config` files: flat `key=value` lines turned into `--key value` flags.
//!
//! The expanded flags are placed right after the subcommand and before every
//! flag given on the command line, so command-line flags win.

use std::fs;
use std::path::Path;

/// Global flags that take a value and may precede the subcommand.
const VALUED_GLOBALS: [&str; 3] = ["--seed", "--threads", "--config"];

/// Subcommands that have their own subcommands.
const NESTED: [&str; 1] = ["nearest-centroid"];

/// Parses `key=value` lines. `true` becomes a bare flag, `false` drops it.
pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("{}: line {}: expected key=value", origin.display(), i + 1));
        };
        let (k, v) = (k.trim().trim_start_matches("--"), v.trim());
        if k.is_empty() {
            return Err(format!("{}: line {}: empty key", origin.display(), i + 1));
        }
        if k == "config" {
            return Err(format!("{}: line {}: config files cannot nest", origin.display(), i + 1));
        }
        match v {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

/// Value of the last `--config` flag, if any.
fn config_path(argv: &[String]) -> Option<String> {
    let mut found = None;
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            found = it.next().cloned();
        } else if let Some(v) = a.strip_prefix("--config=") {
            found = Some(v.to_string());
        }
    }
    found
}

/// Rewrites `argv` as `prog <subcommand path> <config flags> <other args>`.
/// Without `--config` it is returned unchanged.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).map_err(|e| format!("--config {}: {e}", path.display()))?;
    let extra = parse_config(&text, path)?;

    let mut head = vec![argv[0].clone()];
    let mut rest = Vec::new();
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if VALUED_GLOBALS.contains(&a.as_str()) {
            rest.extend(argv[i..(i + 2).min(argv.len())].iter().cloned());
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            rest.push(a.clone());
            i += 1;
            continue;
        }
        head.push(a.clone());
        if NESTED.contains(&a.as_str()) && i + 1 < argv.len() && !argv[i + 1].starts_with('-') {
            head.push(argv[i + 1].clone());
            i += 1;
        }
        rest.extend(argv[i + 1..].iter().cloned());
        break;
    }
    head.extend(extra);
    head.extend(rest);
    Ok(head)
}
