//! key=value config files. A file supplies defaults only: any flag given on
//! the command line wins over the same key in the file.

use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use ghmm::{Error, Result};

/// A subcommand whose arguments can be pre-filled from a config file.
pub trait Configurable {
    fn config_path(&self) -> Option<&Path>;
    /// Accepted keys, spelled like the arg ids (snake_case).
    fn keys() -> &'static [&'static str];
    /// Overwrite one field from its textual form.
    fn set(&mut self, key: &str, value: &str) -> Result<()>;
}

pub fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::InvalidConfig {
        reason: format!("config key {key}: cannot parse {value:?}"),
    })
}

/// Apply `args.config_path()` (if any) onto `args`, skipping every key the
/// user already passed as a flag.
pub fn apply<A: Configurable>(args: &mut A, matches: &ArgMatches) -> Result<()> {
    let Some(path) = args.config_path().map(Path::to_path_buf) else {
        return Ok(());
    };
    let text = fs::read_to_string(&path)?;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    idx + 1
                ),
            });
        };
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        if !A::keys().contains(&key.as_str()) {
            return Err(Error::InvalidConfig {
                reason: format!("{}:{}: unknown config key {key:?}", path.display(), idx + 1),
            });
        }
        if matches.value_source(&key) != Some(ValueSource::CommandLine) {
            args.set(&key, value)?;
        }
    }
    Ok(())
}
