//! Flat `key=value` configuration files, turned into flags spliced in front of the
//! user's own flags so that the latter win.

use std::ffi::OsString;
use std::path::Path;

/// Reads `path` and converts each `key=value` line into `--key value`.
/// `true`/`false` values toggle switches. Blank lines and `#` comments are skipped.
pub fn config_flags(path: &Path) -> Result<Vec<OsString>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Vec<OsString>, String> {
    let mut flags = Vec::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", number + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key '{key}'", number + 1));
        }
        match value.trim() {
            "true" => flags.push(format!("--{key}").into()),
            "false" => {}
            value => {
                flags.push(format!("--{key}").into());
                flags.push(value.into());
            }
        }
    }
    Ok(flags)
}

/// Removes `--config FILE` / `--config=FILE` from `argv`, returning the file.
pub fn take_config(argv: &mut Vec<OsString>) -> Result<Option<OsString>, String> {
    let mut found = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            if i + 1 >= argv.len() {
                return Err("--config needs a file".into());
            }
            found = Some(argv.remove(i + 1));
            argv.remove(i);
        } else if let Some(path) = arg.strip_prefix("--config=") {
            found = Some(path.into());
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

/// Inserts `flags` after the subcommand path (the leading non-flag tokens).
pub fn splice(argv: &mut Vec<OsString>, flags: Vec<OsString>) {
    let prefix = argv
        .iter()
        .skip(1)
        .take(2)
        .take_while(|a| !a.to_string_lossy().starts_with('-'))
        .count();
    let at = 1 + prefix;
    argv.splice(at..at, flags);
}
