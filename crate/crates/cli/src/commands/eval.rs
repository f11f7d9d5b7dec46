// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;

use anyhow::Context;
use log::warn;
use persuasion_probe::metrics::{
    auroc_curve, classification_report, cohens_kappa, strategy_jsd_curve, trait_mse_curve,
    ClassificationReport, OmittedPoint, TurnCurve,
};
use persuasion_probe::report::{read_trajectories, write_curve, write_trajectories};
use persuasion_probe::trajectory::{conversation_end, token_trajectory};
use persuasion_probe::transcript::binarize_trait;
use persuasion_probe::{ActivationBundle, Conversation, ProbeModel, Role, Task, Trajectory};
use serde::Serialize;

use super::{per_conversation, turn_trajectories};
use crate::args::{EvalArgs, GranularityArg};
use crate::corpus::{held_out_ids, load_probes, load_transcripts, pair, BundleIndex};
use crate::failure::{config_error, Classify, RunResult};
use crate::output::{task_slug, OutDir};

#[derive(Debug, Serialize)]
struct CurveSummary {
    file: String,
    points: usize,
    omitted: Vec<Omitted>,
}

#[derive(Debug, Serialize)]
struct Omitted {
    turn: usize,
    reason: String,
}

#[derive(Debug, Serialize)]
struct ProbeSummary {
    probe: String,
    task: String,
    conversations: usize,
    trajectories_file: String,
    curve: Option<CurveSummary>,
    /// Conversation-end report against the annotated label.
    classification: Option<ClassificationReport>,
    /// Agreement of per-turn predictions with annotated strategy labels.
    kappa_vs_labels: Option<f64>,
    kappa_pairs: Option<usize>,
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    layer: u32,
    holdout: f64,
    seed: u64,
    conversations: Vec<String>,
    probes: Vec<ProbeSummary>,
}

fn write_curve_file(out: &OutDir, name: String, curve: &TurnCurve) -> RunResult<CurveSummary> {
    for OmittedPoint { turn, reason } in &curve.omitted {
        warn!("{}: turn {turn} omitted: {reason}", curve.metric);
    }
    out.write(&name, |w| Ok(write_curve(w, curve)?))?;
    Ok(CurveSummary {
        file: name,
        points: curve.points.len(),
        omitted: curve
            .omitted
            .iter()
            .map(|o| Omitted {
                turn: o.turn,
                reason: o.reason.clone(),
            })
            .collect(),
    })
}

/// Conversation-end report over conversations with a known binary label.
fn end_report(
    trajectories: &[Trajectory],
    labels: impl Iterator<Item = Option<bool>>,
    threshold: f64,
    what: &str,
) -> RunResult<Option<ClassificationReport>> {
    let (scores, truth): (Vec<f64>, Vec<bool>) = trajectories
        .iter()
        .zip(labels)
        .filter_map(|(t, l)| Some((t.points.last()?.positive(), l?)))
        .unzip();
    if scores.is_empty() {
        warn!("no {what} labels; classification report skipped");
        return Ok(None);
    }
    Ok(Some(
        classification_report(&scores, &truth, threshold).data()?,
    ))
}

fn write_granularity(
    probe: &ProbeModel,
    pairs: &[(ActivationBundle, &Conversation)],
    turn: &[Trajectory],
    granularity: GranularityArg,
) -> RunResult<Vec<Trajectory>> {
    match granularity {
        GranularityArg::Turn => Ok(turn.to_vec()),
        GranularityArg::Token => per_conversation(pairs, |b, _| Ok(token_trajectory(probe, b)?)),
        GranularityArg::ConversationEnd => per_conversation(pairs, |b, _| {
            Ok(Trajectory {
                conversation_id: b.conversation_id.clone(),
                task: probe.task,
                points: vec![conversation_end(probe, b)?],
            })
        }),
    }
}

fn strategy_kappa(trajectories: &[Trajectory], convs: &[&Conversation]) -> Option<(f64, usize)> {
    let mut predicted = Vec::new();
    let mut annotated = Vec::new();
    for (t, c) in trajectories.iter().zip(convs) {
        for p in &t.points {
            let turn = &c.turns[p.index - 1];
            if let (Role::Persuader, Some(s)) = (turn.role, turn.strategy_label) {
                predicted.push(p.predicted_class);
                annotated.push(s.class_index());
            }
        }
    }
    match cohens_kappa(&predicted, &annotated) {
        Ok(k) => Some((k, predicted.len())),
        Err(e) => {
            warn!("strategy kappa unavailable: {e}");
            None
        }
    }
}

pub fn run(args: &EvalArgs) -> RunResult<()> {
    let index = BundleIndex::scan(&args.inputs.bundles)?;
    let conversations = load_transcripts(&args.inputs.transcripts)?;
    let probes = load_probes(&args.probe)?;
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(config_error(format!(
            "threshold {} outside [0, 1]",
            args.threshold
        )));
    }
    let mut tasks = BTreeSet::new();
    for (p, path) in probes.iter().zip(&args.probe) {
        if let Some(task) = args.task {
            if p.task != task {
                return Err(config_error(format!(
                    "{} is a {} probe, --task asks for {task}",
                    path.display(),
                    p.task
                )));
            }
        }
        if !tasks.insert(task_slug(p.task)) {
            return Err(config_error(format!("two probes for task {}", p.task)));
        }
    }
    let reference = match &args.reference {
        Some(path) => {
            let file = File::open(path)
                .with_context(|| format!("opening {}", path.display()))
                .config()?;
            Some(
                read_trajectories(BufReader::new(file))
                    .with_context(|| format!("reading {}", path.display()))
                    .data()?,
            )
        }
        None => None,
    };
    let layer = index.choose_layer(args.inputs.layer, &probes)?;
    let out = OutDir::create(&args.out)?;

    let mut pairs = pair(index.load(&index.main_at(layer))?, &conversations);
    if args.holdout > 0.0 {
        let ids: Vec<&str> = pairs
            .iter()
            .map(|(b, _)| b.conversation_id.as_str())
            .collect();
        let keep = held_out_ids(&ids, args.holdout, args.seed);
        pairs.retain(|(b, _)| keep.contains(&b.conversation_id));
    }
    if pairs.is_empty() {
        return Err(crate::failure::data_error("no conversations to evaluate"));
    }
    let convs: Vec<&Conversation> = pairs.iter().map(|(_, c)| *c).collect();

    let mut summaries = Vec::new();
    for (probe, path) in probes.iter().zip(&args.probe) {
        let slug = task_slug(probe.task);
        let turn = turn_trajectories(probe, &pairs)?;

        let written = write_granularity(probe, &pairs, &turn, args.granularity)?;
        let traj_file = format!("{slug}.trajectories.csv");
        let rows: Vec<(&Trajectory, Option<&Conversation>)> = written
            .iter()
            .zip(&convs)
            .map(|(t, c)| (t, Some(*c)))
            .collect();
        out.write(&traj_file, |w| Ok(write_trajectories(w, &rows)?))?;

        let mut summary = ProbeSummary {
            probe: path.display().to_string(),
            task: probe.task.to_string(),
            conversations: pairs.len(),
            trajectories_file: traj_file,
            curve: None,
            classification: None,
            kappa_vs_labels: None,
            kappa_pairs: None,
        };
        match probe.task {
            Task::Persuasion => {
                let outcomes: Vec<_> = convs.iter().map(|c| c.labels.outcome).collect();
                let curve = auroc_curve(&turn, &outcomes).data()?;
                summary.curve = Some(write_curve_file(
                    &out,
                    format!("{slug}.auroc_curve.csv"),
                    &curve,
                )?);
                let labels = outcomes.iter().map(|o| o.label().map(|l| l == 1));
                summary.classification = end_report(&turn, labels, args.threshold, "outcome")?;
            }
            Task::Trait(t) => {
                let truth: Vec<Option<f64>> = convs
                    .iter()
                    .map(|c| c.labels.ee_big5.as_ref().and_then(|m| m.get(&t).copied()))
                    .collect();
                let series: Vec<(&Trajectory, f64)> = turn
                    .iter()
                    .zip(&truth)
                    .filter_map(|(tr, s)| Some((tr, (*s)?)))
                    .collect();
                if series.is_empty() {
                    warn!("no {t} scores in the corpus; MSE curve skipped");
                } else {
                    let curve = trait_mse_curve(&series).data()?;
                    summary.curve = Some(write_curve_file(
                        &out,
                        format!("{slug}.trait_mse_curve.csv"),
                        &curve,
                    )?);
                }
                let labels: Vec<Option<bool>> = truth
                    .iter()
                    .map(|s| s.and_then(|v| binarize_trait(v).ok()).map(|c| c == 1))
                    .collect();
                summary.classification =
                    end_report(&turn, labels.into_iter(), args.threshold, &t.to_string())?;
            }
            Task::Strategy => {
                if let Some(reference) = &reference {
                    let curve = strategy_jsd_curve(&turn, reference).data()?;
                    if curve.points.is_empty() {
                        warn!("reference shares no conversations with the evaluated set");
                    }
                    summary.curve = Some(write_curve_file(
                        &out,
                        format!("{slug}.strategy_jsd_curve.csv"),
                        &curve,
                    )?);
                }
                if let Some((k, n)) = strategy_kappa(&turn, &convs) {
                    summary.kappa_vs_labels = Some(k);
                    summary.kappa_pairs = Some(n);
                }
            }
        }
        summaries.push(summary);
    }

    let mut ids: Vec<String> = pairs
        .iter()
        .map(|(b, _)| b.conversation_id.clone())
        .collect();
    ids.sort();
    out.write_json(
        "eval_summary.json",
        &EvalSummary {
            layer,
            holdout: args.holdout,
            seed: args.seed,
            conversations: ids,
            probes: summaries,
        },
    )?;
    Ok(())
}
