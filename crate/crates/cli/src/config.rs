// SPDX-License-Identifier: MIT OR Apache-2.0

//! `key=value` run files. Keys are long flag names (`learning-rate` or
//! `learning_rate`); `#` starts a comment line. Entries are turned into
//! command-line flags placed before the user's own arguments, so any flag
//! given explicitly wins.

use std::ffi::OsString;

use clap::Command;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    MissingEquals { line: usize },
    #[error("line {line}: empty key")]
    EmptyKey { line: usize },
    #[error("line {line}: key `{key}` may only contain letters, digits, '-' and '_'")]
    BadKey { line: usize, key: String },
    #[error("line {line}: `{key}` already set on line {first}")]
    Duplicate {
        line: usize,
        key: String,
        first: usize,
    },
    #[error("line {line}: `{key}` is not a flag of `{subcommand}`")]
    UnknownKey {
        line: usize,
        key: String,
        subcommand: String,
    },
    #[error("line {line}: `{key}` is a switch; use true or false, not `{value}`")]
    BadSwitch {
        line: usize,
        key: String,
        value: String,
    },
}

fn normalize(key: &str) -> String {
    key.replace('_', "-")
}

/// Parses a run file. Keys that take several values (such as `probe`) may
/// repeat; the caller decides which keys allow that.
pub fn parse_config(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or(ConfigError::MissingEquals { line })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::EmptyKey { line });
        }
        if !key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(ConfigError::BadKey {
                line,
                key: key.to_string(),
            });
        }
        out.push(Entry {
            line,
            key: normalize(key),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn mentions(args: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("--{long}=");
    args.iter().any(|a| {
        a.to_str()
            .is_some_and(|s| s == flag || s.starts_with(&prefix))
    })
}

/// Expands `entries` into flags for `subcommand`, skipping keys the user
/// already passed in `user_args`. Returns the flags to insert right after
/// the subcommand name.
pub fn to_flags(
    entries: &[Entry],
    root: &Command,
    subcommand: &str,
    user_args: &[OsString],
) -> Result<Vec<OsString>, ConfigError> {
    let sub = root.find_subcommand(subcommand);
    let lookup = |key: &str| {
        sub.into_iter()
            .flat_map(|s| s.get_arguments())
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key))
    };
    let mut out = Vec::new();
    let mut seen: Vec<(&str, usize)> = Vec::new();
    for e in entries {
        if e.key == "config" {
            continue;
        }
        let arg = lookup(&e.key).ok_or_else(|| ConfigError::UnknownKey {
            line: e.line,
            key: e.key.clone(),
            subcommand: subcommand.to_string(),
        })?;
        let repeatable = matches!(arg.get_action(), clap::ArgAction::Append);
        if let Some(&(_, first)) = seen.iter().find(|(k, _)| *k == e.key) {
            if !repeatable {
                return Err(ConfigError::Duplicate {
                    line: e.line,
                    key: e.key.clone(),
                    first,
                });
            }
        } else {
            seen.push((&e.key, e.line));
        }
        if mentions(user_args, &e.key) {
            continue;
        }
        if arg.get_action().takes_values() {
            out.push(OsString::from(format!("--{}", e.key)));
            out.push(OsString::from(&e.value));
        } else {
            match e.value.as_str() {
                "true" => out.push(OsString::from(format!("--{}", e.key))),
                "false" => {}
                other => {
                    return Err(ConfigError::BadSwitch {
                        line: e.line,
                        key: e.key.clone(),
                        value: other.to_string(),
                    })
                }
            }
        }
    }
    Ok(out)
}
