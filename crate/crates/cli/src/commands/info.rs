// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use persuasion_probe::read_bundle;
use serde::Serialize;

use crate::args::InfoArgs;
use crate::corpus::BundleIndex;
use crate::failure::{config_error, Classify, RunResult};
use crate::output::OutDir;

#[derive(Debug, Serialize)]
struct Info {
    file: String,
    conversation_id: String,
    model_id: String,
    layer: u32,
    d: usize,
    n_tokens: usize,
    turns: usize,
    in_span_tokens: usize,
}

fn describe(path: &Path) -> RunResult<Info> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .data()?;
    let b = read_bundle(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .data()?;
    Ok(Info {
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        conversation_id: b.conversation_id.clone(),
        model_id: b.model_id.clone(),
        layer: b.layer,
        d: b.d,
        n_tokens: b.n_tokens(),
        turns: b.turn_spans.len(),
        in_span_tokens: b.in_span_tokens().count(),
    })
}

pub fn run(args: &InfoArgs) -> RunResult<()> {
    let paths: Vec<PathBuf> = if args.bundles.is_dir() {
        let index = BundleIndex::scan(&args.bundles)?;
        index
            .names
            .iter()
            .map(|n| args.bundles.join(n.file_name()))
            .collect()
    } else if args.bundles.is_file() {
        vec![args.bundles.clone()]
    } else {
        return Err(config_error(format!(
            "{} does not exist",
            args.bundles.display()
        )));
    };
    let infos: Vec<Info> = paths
        .iter()
        .map(|p| describe(p))
        .collect::<RunResult<_>>()?;
    match &args.out {
        Some(dir) => {
            OutDir::create(dir)?.write("bundle_info.csv", |w| {
                let mut csv = csv::Writer::from_writer(w);
                for i in &infos {
                    csv.serialize(i)?;
                }
                csv.flush()?;
                Ok(())
            })?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for i in &infos {
                serde_json::to_writer(&mut stdout, i).data()?;
                writeln!(stdout).data()?;
            }
        }
    }
    Ok(())
}
