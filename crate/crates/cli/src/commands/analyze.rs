// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use anyhow::Context;
use log::warn;
use persuasion_probe::analysis::{
    ablation_deltas, calibration_histogram, correlate, detect, CorrelationInput, DetectionRule,
};
use persuasion_probe::report::{
    write_ablation, write_calibration, write_correlation, write_correlation_counts, write_detection,
};
use persuasion_probe::trajectory::{strategy_trajectory, turn_trajectory};
use persuasion_probe::transcript::RoleFilter;
use persuasion_probe::{Conversation, Task, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use super::{all_trait_trajectories, per_conversation, split_trait_probes};
use crate::args::{AblateArgs, CalibrateArgs, CorrelateArgs, DetectArgs, RuleKind};
use crate::corpus::{load_probes, load_transcripts, pair, BundleIndex};
use crate::failure::{config_error, data_error, Classify, RunResult};
use crate::output::OutDir;

#[derive(Debug, Serialize)]
struct DetectSummary {
    layer: u32,
    clauses: Vec<String>,
    positive_class: String,
    conversations: usize,
    turns: usize,
}

pub fn run_detect(args: &DetectArgs) -> RunResult<()> {
    let index = BundleIndex::scan(&args.inputs.bundles)?;
    let conversations = load_transcripts(&args.inputs.transcripts)?;
    let (traits, rest) = split_trait_probes(load_probes(&args.probe)?)?;
    if let Some(p) = rest.first() {
        return Err(config_error(format!(
            "detect takes trait probes only, got {}",
            p.task
        )));
    }
    let rule = if args.clause.is_empty() {
        match args.rule {
            RuleKind::Unpersuasion => DetectionRule::unpersuasion(),
            RuleKind::Persuasion => DetectionRule::persuasion(),
        }
    } else {
        let positive = args
            .positive_class
            .ok_or_else(|| config_error("--clause needs --positive-class"))?;
        DetectionRule::new(args.clause.clone(), positive).config()?
    };
    let layer = index.choose_layer(args.inputs.layer, &traits)?;
    let out = OutDir::create(&args.out)?;

    let pairs = pair(index.load(&index.main_at(layer))?, &conversations);
    if pairs.is_empty() {
        return Err(data_error("no conversations with bundles"));
    }
    let trajectories = all_trait_trajectories(&traits, &pairs)?;
    let max_turn = trajectories
        .iter()
        .filter_map(|m| m.values().filter_map(Trajectory::max_index).min())
        .max()
        .unwrap_or(0);

    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for k in 1..=max_turn {
        let members: Vec<usize> = (0..pairs.len())
            .filter(|&i| trajectories[i].values().all(|t| t.at(k).is_some()))
            .collect();
        let population: Vec<_> = members
            .iter()
            .map(|&i| (&trajectories[i], pairs[i].1.labels.outcome))
            .collect();
        let d = detect(&rule, &population, k).data()?;
        for (&i, &f) in members.iter().zip(&d.flags) {
            flags.push((k, i, f));
        }
        if d.tpr.is_none() || d.fpr.is_none() {
            warn!(
                "turn {k}: {} positives, {} negatives; a rate is undefined",
                d.n_pos, d.n_neg
            );
        }
        rows.push(d);
    }
    out.write("detection.csv", |w| Ok(write_detection(w, &rows)?))?;
    out.write("detection_flags.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["conversation_id", "turn", "outcome", "flagged"])?;
        for &(k, i, f) in &flags {
            let (b, c) = &pairs[i];
            csv.write_record([
                b.conversation_id.as_str(),
                &k.to_string(),
                c.labels.outcome.as_str(),
                if f { "1" } else { "0" },
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    out.write_json(
        "detection_summary.json",
        &DetectSummary {
            layer,
            clauses: rule.clauses.iter().map(ToString::to_string).collect(),
            positive_class: rule.positive_class.to_string(),
            conversations: pairs.len(),
            turns: max_turn,
        },
    )?;
    Ok(())
}

pub fn run_correlate(args: &CorrelateArgs) -> RunResult<()> {
    let index = BundleIndex::scan(&args.inputs.bundles)?;
    let conversations = load_transcripts(&args.inputs.transcripts)?;
    let (traits, rest) = split_trait_probes(load_probes(&args.probe)?)?;
    let strategy = match rest.as_slice() {
        [p] if p.task == Task::Strategy => p.clone(),
        [] => return Err(data_error("missing strategy probe")),
        _ => {
            return Err(config_error(
                "correlate takes one strategy probe and five trait probes",
            ))
        }
    };
    let mut all = traits.clone();
    all.push(strategy.clone());
    let layer = index.choose_layer(args.inputs.layer, &all)?;
    let out = OutDir::create(&args.out)?;

    let pairs = pair(index.load(&index.main_at(layer))?, &conversations);
    let trait_maps = all_trait_trajectories(&traits, &pairs)?;
    let strategies = per_conversation(&pairs, |b, c| {
        Ok(strategy_trajectory(&strategy, b, c, RoleFilter::All)?)
    })?;
    let inputs: Vec<CorrelationInput<'_>> = pairs
        .iter()
        .zip(&strategies)
        .zip(&trait_maps)
        .map(|(((_, c), s), t)| CorrelationInput {
            conversation: c,
            strategy: s,
            traits: t,
        })
        .collect();
    let matrix = correlate(&inputs, args.outcome).data()?;
    out.write("correlation.csv", |w| Ok(write_correlation(w, &matrix)?))?;
    out.write("correlation_n.csv", |w| {
        Ok(write_correlation_counts(w, &matrix)?)
    })?;
    Ok(())
}

pub fn run_calibrate(args: &CalibrateArgs) -> RunResult<()> {
    let index = BundleIndex::scan(&args.inputs.bundles)?;
    let conversations = load_transcripts(&args.inputs.transcripts)?;
    let probe = load_probes(std::slice::from_ref(&args.probe))?.remove(0);
    if probe.task != Task::Persuasion {
        return Err(config_error(format!(
            "calibrate needs a persuasion probe, got {}",
            probe.task
        )));
    }
    let layer = index.choose_layer(args.inputs.layer, std::slice::from_ref(&probe))?;
    let out = OutDir::create(&args.out)?;

    let pairs = pair(index.load(&index.main_at(layer))?, &conversations);
    let scored = per_conversation(&pairs, |b, c: &Conversation| {
        let traj = turn_trajectory(&probe, b)?;
        Ok(c.turns
            .iter()
            .filter_map(|t| {
                let label = t.semantic_label.clone()?;
                Some((label, traj.at(t.index + 1)?.positive()))
            })
            .collect::<Vec<_>>())
    })?;
    let items: Vec<(String, f64)> = scored.into_iter().flatten().collect();
    let bins = calibration_histogram(&items)
        .context("no turns carry a semantic label")
        .data()?;
    out.write("calibration.csv", |w| Ok(write_calibration(w, &bins)?))?;
    Ok(())
}

/// `(word_index, word, delta_p)` rows for one conversation.
type AblationRows = Vec<(usize, String, f64)>;

pub fn run_ablate(args: &AblateArgs) -> RunResult<()> {
    let index = BundleIndex::scan(&args.inputs.bundles)?;
    let conversations = load_transcripts(&args.inputs.transcripts)?;
    let probe = load_probes(std::slice::from_ref(&args.probe))?.remove(0);
    if probe.num_classes() != 2 {
        return Err(config_error(format!(
            "ablation needs a binary probe, got {}",
            probe.task
        )));
    }
    let layer = index.choose_layer(args.inputs.layer, std::slice::from_ref(&probe))?;
    let mut variants = index.ablations_at(layer);
    if !args.conversation.is_empty() {
        for id in &args.conversation {
            if !variants.contains_key(id.as_str()) {
                return Err(data_error(format!(
                    "no ablation bundles for `{id}` at layer {layer}"
                )));
            }
        }
        variants.retain(|id, _| args.conversation.iter().any(|c| c == id));
    }
    if variants.is_empty() {
        return Err(data_error(format!("no ablation bundles at layer {layer}")));
    }
    let by_id: BTreeMap<&str, &Conversation> =
        conversations.iter().map(|c| (c.id.as_str(), c)).collect();
    let out = OutDir::create(&args.out)?;

    let jobs: Vec<_> = variants.into_iter().collect();
    let results: Vec<RunResult<(String, AblationRows)>> = jobs
        .par_iter()
        .map(|(id, names)| {
            let conv = by_id
                .get(id)
                .ok_or_else(|| data_error(format!("no transcript for `{id}`")))?;
            let main = index
                .main_at(layer)
                .into_iter()
                .find(|n| n.conversation_id == *id)
                .ok_or_else(|| {
                    data_error(format!("no original bundle for `{id}` at layer {layer}"))
                })?;
            let original = index.load(&[main])?.remove(0);
            let loaded = index.load(names)?;
            let words = conv.words();
            let mut pairs = Vec::with_capacity(loaded.len());
            for (n, b) in names.iter().zip(loaded) {
                let w = n.ablated_word.expect("ablation name");
                if w >= words.len() {
                    return Err(data_error(format!(
                        "`{id}` has {} words, ablation bundle names word {w}",
                        words.len()
                    )));
                }
                pairs.push((w, b));
            }
            let deltas = ablation_deltas(&original, &pairs, &probe)
                .with_context(|| format!("conversation `{id}`"))
                .data()?;
            Ok((
                id.to_string(),
                deltas
                    .into_iter()
                    .map(|(w, dp)| (w, words[w].to_string(), dp))
                    .collect(),
            ))
        })
        .collect();
    for r in results {
        let (id, rows) = r?;
        out.write(&format!("ablation_{id}.csv"), |w| {
            Ok(write_ablation(w, &rows)?)
        })?;
    }
    Ok(())
}
