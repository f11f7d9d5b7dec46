// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::BufReader;

use anyhow::Context;
use persuasion_probe::metrics::cohens_kappa;
use persuasion_probe::report::read_label_columns;
use serde::Serialize;

use crate::args::KappaArgs;
use crate::failure::{config_error, Classify, RunResult};
use crate::output::OutDir;

#[derive(Debug, Serialize)]
struct Kappa {
    kappa: f64,
    n: usize,
    columns: Option<[String; 2]>,
}

pub fn run(args: &KappaArgs) -> RunResult<()> {
    if !args.labels.is_file() {
        return Err(config_error(format!(
            "{} does not exist",
            args.labels.display()
        )));
    }
    let columns = match &args.columns {
        Some(spec) => match spec.split_once(',') {
            Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                Some([a.trim().to_string(), b.trim().to_string()])
            }
            _ => return Err(config_error(format!("--columns `{spec}` is not A,B"))),
        },
        None => None,
    };
    let file = File::open(&args.labels)
        .with_context(|| format!("opening {}", args.labels.display()))
        .data()?;
    let (a, b) = read_label_columns(
        BufReader::new(file),
        columns.as_ref().map(|[a, b]| (a.as_str(), b.as_str())),
    )
    .with_context(|| format!("reading {}", args.labels.display()))
    .data()?;
    let kappa = cohens_kappa(&a, &b).data()?;
    let result = Kappa {
        kappa,
        n: a.len(),
        columns,
    };
    println!("{}", serde_json::to_string(&result).data()?);
    if let Some(dir) = &args.out {
        OutDir::create(dir)?.write_json("kappa.json", &result)?;
    }
    Ok(())
}
