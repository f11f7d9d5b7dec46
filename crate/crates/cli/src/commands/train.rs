// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use anyhow::Context;
use log::{info, warn};
use persuasion_probe::dataset::Assembled;
use persuasion_probe::probe::{accuracy, Trained};
use persuasion_probe::report::write_loss_curve;
use persuasion_probe::{
    assemble, save_probe, train, ActivationBundle, Conversation, Dataset, Optimizer, Task,
    TrainConfig, WindowPolicy,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{Hyper, OptimizerKind, SweepArgs, TrainArgs};
use crate::corpus::{held_out_ids, load_transcripts, pair, BundleIndex};
use crate::failure::{Classify, RunResult};
use crate::output::{task_slug, OutDir};

impl Hyper {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            optimizer: match self.optimizer {
                OptimizerKind::Adam => Optimizer::adam(),
                OptimizerKind::Sgd => Optimizer::Sgd,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            l2_penalty: self.l2,
        }
    }
}

#[derive(Debug, Serialize)]
struct Hyperparameters {
    learning_rate: f64,
    optimizer: &'static str,
    epochs: usize,
    batch_size: Option<usize>,
    l2: f64,
    seed: u64,
}

impl From<&Hyper> for Hyperparameters {
    fn from(h: &Hyper) -> Self {
        Hyperparameters {
            learning_rate: h.learning_rate,
            optimizer: match h.optimizer {
                OptimizerKind::Adam => "adam",
                OptimizerKind::Sgd => "sgd",
            },
            epochs: h.epochs,
            batch_size: h.batch_size,
            l2: h.l2,
            seed: h.seed,
        }
    }
}

#[derive(Debug, Serialize)]
struct Split {
    holdout: f64,
    seed: u64,
    train_conversations: usize,
    test_conversations: usize,
    test_examples: usize,
    test_accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    task: String,
    layer: u32,
    model_id: Option<String>,
    policy: String,
    examples: usize,
    class_counts: Vec<usize>,
    skipped_windows: usize,
    final_loss: f64,
    train_accuracy: f64,
    split: Split,
    hyperparameters: Hyperparameters,
    probe_file: String,
}

struct Fit {
    trained: Trained,
    train_set: Dataset,
    skipped: usize,
    split: Split,
}

/// Assembles, splits by conversation and trains at one layer.
fn fit(
    pairs: &[(ActivationBundle, &Conversation)],
    task: Task,
    policy: WindowPolicy,
    hyper: &Hyper,
    holdout: f64,
) -> RunResult<Fit> {
    let ids: Vec<&str> = pairs
        .iter()
        .map(|(b, _)| b.conversation_id.as_str())
        .collect();
    let test_ids = held_out_ids(&ids, holdout, hyper.seed);
    let (test, train_part): (Vec<_>, Vec<_>) = pairs
        .iter()
        .partition(|(b, _)| test_ids.contains(&b.conversation_id));

    let build =
        |part: &[&(ActivationBundle, &Conversation)]| -> persuasion_probe::Result<Assembled> {
            let bundles: Vec<ActivationBundle> = part.iter().map(|(b, _)| b.clone()).collect();
            let convs: Vec<Conversation> = part.iter().map(|(_, c)| (*c).clone()).collect();
            assemble(&bundles, &convs, policy, task)
        };
    let assembled = build(&train_part)
        .context("assembling training data")
        .data()?;
    let classes = assembled.dataset.class_counts();
    if classes.iter().filter(|&&n| n > 0).count() < 2 {
        warn!("training data for {task} has a single class: {classes:?}");
    }
    let trained = train(&assembled.dataset, task, &hyper.train_config())
        .context("training")
        .data()?;

    let train_conversations: BTreeSet<&str> = train_part
        .iter()
        .map(|(b, _)| b.conversation_id.as_str())
        .collect();
    let (test_examples, test_accuracy) = if test.is_empty() {
        (0, None)
    } else {
        match build(&test) {
            Ok(a) => (
                a.dataset.len(),
                Some(accuracy(&trained.probe, &a.dataset).data()?),
            ),
            Err(e) => {
                warn!("held-out set unusable: {e}");
                (0, None)
            }
        }
    };
    let test_conversations: BTreeSet<&str> = test
        .iter()
        .map(|(b, _)| b.conversation_id.as_str())
        .collect();
    Ok(Fit {
        trained,
        train_set: assembled.dataset,
        skipped: assembled.skipped,
        split: Split {
            holdout,
            seed: hyper.seed,
            train_conversations: train_conversations.len(),
            test_conversations: test_conversations.len(),
            test_examples,
            test_accuracy,
        },
    })
}

pub fn run_train(args: &TrainArgs) -> RunResult<()> {
    let index = BundleIndex::scan(&args.inputs.bundles)?;
    let conversations = load_transcripts(&args.inputs.transcripts)?;
    args.policy.validate().config()?;
    args.hyper.train_config().validate().config()?;
    let layer = index.choose_layer(args.inputs.layer, &[])?;
    let out = OutDir::create(&args.out)?;

    let bundles = index.load(&index.main_at(layer))?;
    let pairs = pair(bundles, &conversations);
    let fit = fit(&pairs, args.task, args.policy, &args.hyper, args.holdout)?;
    let probe = &fit.trained.probe;
    let train_accuracy = accuracy(probe, &fit.train_set).data()?;

    let slug = task_slug(args.task);
    let probe_name = format!("{slug}.probe.json");
    out.write_bytes(&probe_name, &save_probe(probe).data()?)?;
    out.write(&format!("{slug}.loss.csv"), |w| {
        Ok(write_loss_curve(w, &fit.trained.loss_curve)?)
    })?;
    let summary = TrainSummary {
        task: args.task.to_string(),
        layer,
        model_id: fit.train_set.model_id.clone(),
        policy: args.policy.to_string(),
        examples: fit.train_set.len(),
        class_counts: fit.train_set.class_counts(),
        skipped_windows: fit.skipped,
        final_loss: *fit.trained.loss_curve.last().expect("at least one epoch"),
        train_accuracy,
        split: fit.split,
        hyperparameters: (&args.hyper).into(),
        probe_file: probe_name,
    };
    out.write_json(&format!("{slug}.train.json"), &summary)?;
    info!(
        "{}: {} examples, train accuracy {train_accuracy:.4}",
        args.task, summary.examples
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    layer: u32,
    train_examples: usize,
    test_examples: usize,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
    final_loss: f64,
}

pub fn run_sweep(args: &SweepArgs) -> RunResult<()> {
    let index = BundleIndex::scan(&args.bundles)?;
    let conversations = load_transcripts(&args.transcripts)?;
    args.policy.validate().config()?;
    args.hyper.train_config().validate().config()?;
    let layers: Vec<u32> = index.layers().into_iter().collect();
    if layers.is_empty() {
        return Err(crate::failure::config_error(format!(
            "no .ppab bundles in {}",
            args.bundles.display()
        )));
    }
    let out = OutDir::create(&args.out)?;

    let rows: Vec<RunResult<SweepRow>> = layers
        .par_iter()
        .map(|&layer| {
            let bundles = index.load(&index.main_at(layer))?;
            let pairs = pair(bundles, &conversations);
            let fit = fit(&pairs, args.task, args.policy, &args.hyper, args.holdout).map_err(
                |f| match f {
                    crate::failure::Failure::Data(e) => {
                        crate::failure::Failure::Data(e.context(format!("layer {layer}")))
                    }
                    other => other,
                },
            )?;
            Ok(SweepRow {
                layer,
                train_examples: fit.train_set.len(),
                test_examples: fit.split.test_examples,
                train_accuracy: accuracy(&fit.trained.probe, &fit.train_set).data()?,
                test_accuracy: fit.split.test_accuracy,
                final_loss: *fit.trained.loss_curve.last().expect("at least one epoch"),
            })
        })
        .collect();
    let rows: Vec<SweepRow> = rows.into_iter().collect::<RunResult<_>>()?;

    out.write("layer_sweep.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(())
}
