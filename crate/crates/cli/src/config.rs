//! Folding a `--config` file into the argument list.

use std::ffi::OsString;

use surveytmle::io::parse_config;
use surveytmle::{Error, Result};

/// Inserts `--key value` pairs from the config file right after the
/// subcommand, so that flags given on the command line come later and win.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if a == "--config" || a == "--log" || a == "--threads" {
            if a == "--config" {
                path = args.get(i + 1).cloned();
            }
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else if sub.is_none() && !a.starts_with('-') {
            sub = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(sub)) = (path, sub) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::InvalidInput(format!("cannot read config {path}: {e}")))?;
    let mut injected = Vec::new();
    for (key, value) in parse_config(&text)? {
        if key == "config" {
            return Err(Error::InvalidInput("config files cannot include other config files".into()));
        }
        match value.as_str() {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value);
            }
        }
    }
    let mut out = argv;
    out.splice(sub + 1..sub + 1, injected.into_iter().map(OsString::from));
    Ok(out)
}
