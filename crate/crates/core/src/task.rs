// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::transcript::{BigFive, Strategy};

/// What a probe predicts.
///
/// Binary tasks put the positive reading (persuaded, high trait) at class 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Persuasion,
    Trait(BigFive),
    Strategy,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Persuasion | Task::Trait(_) => 2,
            Task::Strategy => 3,
        }
    }

    pub fn class_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            Task::Persuasion => &["unpersuaded", "persuaded"],
            Task::Trait(_) => &["low", "high"],
            Task::Strategy => &[
                Strategy::Logical.as_str(),
                Strategy::Emotional.as_str(),
                Strategy::Credibility.as_str(),
            ],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Persuasion => f.write_str("persuasion"),
            Task::Trait(t) => write!(f, "trait:{t}"),
            Task::Strategy => f.write_str("strategy"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    /// Accepts `persuasion`, `strategy`, `trait:<name>` or a bare trait name.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persuasion" => Ok(Task::Persuasion),
            "strategy" => Ok(Task::Strategy),
            other => {
                let name = other.strip_prefix("trait:").unwrap_or(other);
                name.parse::<BigFive>()
                    .map(Task::Trait)
                    .map_err(|_| Error::InvalidValue(format!("unknown task `{s}`")))
            }
        }
    }
}
