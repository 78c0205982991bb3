//! `key=value` config files, applied with lower precedence than flags.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::cli::Cli;
use crate::error::{CliError, CliResult};
use crate::io::read_text;

/// Parse `key=value` lines; `#` starts a comment line.
pub fn parse(text: &str, what: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::input(format!("{what}: line {}: expected key=value", i + 1))
        })?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(CliError::input(format!(
                "{what}: line {}: empty key",
                i + 1
            )));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Insert the config entries as flags directly after the subcommand name,
/// so that later command-line flags override them.
pub fn apply(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let entries = parse(&read_text(path)?, &path.display().to_string())?;
    let cmd = Cli::command();
    let Some((pos, sub)) = args.iter().enumerate().skip(1).find_map(|(i, a)| {
        cmd.find_subcommand(a.to_string_lossy().as_ref())
            .map(|s| (i, s.clone()))
    }) else {
        return Ok(args);
    };
    let global: Vec<_> = cmd.get_arguments().cloned().collect();
    let mut injected = Vec::new();
    for (k, v) in entries {
        if k == "config" {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(global.iter())
            .find(|a| a.get_long() == Some(k.as_str()));
        let known_elsewhere = cmd
            .get_subcommands()
            .any(|s| s.get_arguments().any(|a| a.get_long() == Some(k.as_str())));
        match arg {
            Some(a) if !a.get_action().takes_values() => match v.as_str() {
                "true" | "1" | "yes" => injected.push(OsString::from(format!("--{k}"))),
                "false" | "0" | "no" => {}
                _ => {
                    return Err(CliError::input(format!(
                        "{}: '{k}' is a switch; use true or false",
                        path.display()
                    )))
                }
            },
            Some(_) => injected.push(OsString::from(format!("--{k}={v}"))),
            None if known_elsewhere => {}
            None => {
                return Err(CliError::input(format!(
                    "{}: unknown option '{k}'",
                    path.display()
                )))
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_prefixes() {
        let e = parse("# c\n--seed = 3\nout=x\n\n", "cfg").unwrap();
        assert_eq!(
            e,
            vec![("seed".into(), "3".into()), ("out".into(), "x".into())]
        );
        assert!(parse("seed\n", "cfg").is_err());
    }
}
