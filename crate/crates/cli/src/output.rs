// SPDX-License-Identifier: MIT OR Apache-2.0

//! Everything a run writes goes through [`OutDir`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::failure::{Classify, RunResult};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> RunResult<Self> {
        if root.exists() && !root.is_dir() {
            return Err(crate::failure::config_error(format!(
                "--out {} exists and is not a directory",
                root.display()
            )));
        }
        fs::create_dir_all(root)
            .with_context(|| format!("creating {}", root.display()))
            .config()?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` through `body`, which receives a buffered file.
    pub fn write<F>(&self, name: &str, body: F) -> RunResult<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    {
        let path = self.path(name);
        let file = File::create(&path)
            .with_context(|| format!("creating {}", path.display()))
            .data()?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|()| w.flush().map_err(Into::into))
            .with_context(|| format!("writing {}", path.display()))
            .data()?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> RunResult<PathBuf> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> RunResult<PathBuf> {
        self.write(name, |w| Ok(w.write_all(bytes)?))
    }
}

/// File-name form of a task: `persuasion`, `strategy`, `trait-openness`.
pub fn task_slug(task: persuasion_probe::Task) -> String {
    task.to_string().replace(':', "-")
}
