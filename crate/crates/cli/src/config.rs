//! Optional `key=value` config files.
//!
//! Each key is the long name of a flag of the selected subcommand. The pairs
//! are spliced into the argument list right after the subcommand so that any
//! flag given on the command line, which comes later, takes precedence.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::args::Cli;

pub struct Expanded {
    pub argv: Vec<String>,
    /// `(key, value, overridden_on_command_line)`
    from_file: Vec<(String, String, bool)>,
    file: Option<PathBuf>,
}

impl Expanded {
    pub fn report_precedence(&self) {
        let Some(file) = &self.file else {
            eprintln!("config: no config file; flags override defaults");
            return;
        };
        eprintln!("config: precedence is flags > {} > defaults", file.display());
        for (key, value, overridden) in &self.from_file {
            let note = if *overridden { " (overridden by flag)" } else { "" };
            eprintln!("config: {key}={value}{note}");
        }
    }
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value", i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn expand_config(argv: Vec<String>) -> Result<Expanded> {
    let Some(path) = config_path(&argv) else {
        return Ok(Expanded {
            argv,
            from_file: Vec::new(),
            file: None,
        });
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let pairs = parse_pairs(&text)?;

    let root = Cli::command();
    let Some((pos, sub)) = argv
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| root.find_subcommand(a).map(|s| (i, s)))
    else {
        bail!("--config needs a subcommand");
    };

    let mut injected = Vec::new();
    let mut from_file = Vec::new();
    for (key, value) in pairs {
        if key == "config" || key == "verbose" {
            bail!("config key `{key}` is only accepted on the command line");
        }
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            bail!("unknown config key `{key}` for `{}`", sub.get_name());
        };
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => bail!("config key `{key}` expects true/false, got `{other}`"),
            }
        }
        let flag = format!("--{key}");
        let overridden = argv[pos + 1..]
            .iter()
            .any(|a| a == &flag || a.starts_with(&format!("{flag}=")));
        from_file.push((key, value, overridden));
    }

    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(Expanded {
        argv: out,
        from_file,
        file: Some(path),
    })
}
