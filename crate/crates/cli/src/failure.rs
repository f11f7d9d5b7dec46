// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::process::ExitCode;

/// A failed run, classified by who has to fix it.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, missing paths, mismatched probe and task. Exit 2.
    Config(anyhow::Error),
    /// Unreadable or inconsistent inputs, too little data. Exit 3.
    Data(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Config(_) => ExitCode::from(2),
            Failure::Data(_) => ExitCode::from(3),
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Data(e) => e,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error())
    }
}

pub type RunResult<T> = Result<T, Failure>;

/// Tags an error as a config or data failure.
pub trait Classify<T> {
    fn config(self) -> RunResult<T>;
    fn data(self) -> RunResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> RunResult<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn data(self) -> RunResult<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

pub fn config_error(msg: impl fmt::Display) -> Failure {
    Failure::Config(anyhow::anyhow!("{msg}"))
}

pub fn data_error(msg: impl fmt::Display) -> Failure {
    Failure::Data(anyhow::anyhow!("{msg}"))
}
