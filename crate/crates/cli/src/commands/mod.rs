// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod analyze;
pub mod eval;
pub mod info;
pub mod kappa;
pub mod train;

use std::collections::BTreeMap;

use anyhow::Context;
use persuasion_probe::trajectory::{trait_trajectories, turn_trajectory};
use persuasion_probe::{ActivationBundle, BigFive, Conversation, ProbeModel, Task, Trajectory};
use rayon::prelude::*;

use crate::failure::{data_error, Classify, RunResult};

/// Applies `f` to every pair in parallel; results keep input order and the
/// first failure in that order is returned.
pub(crate) fn per_conversation<T, F>(
    pairs: &[(ActivationBundle, &Conversation)],
    f: F,
) -> RunResult<Vec<T>>
where
    T: Send,
    F: Fn(&ActivationBundle, &Conversation) -> anyhow::Result<T> + Sync,
{
    let results: Vec<anyhow::Result<T>> = pairs.par_iter().map(|(b, c)| f(b, c)).collect();
    results
        .into_iter()
        .zip(pairs)
        .map(|(r, (b, _))| {
            r.with_context(|| format!("conversation `{}`", b.conversation_id))
                .data()
        })
        .collect()
}

pub(crate) fn turn_trajectories(
    probe: &ProbeModel,
    pairs: &[(ActivationBundle, &Conversation)],
) -> RunResult<Vec<Trajectory>> {
    per_conversation(pairs, |b, _| Ok(turn_trajectory(probe, b)?))
}

/// Splits probes into the five trait probes (checked complete) and the rest.
pub(crate) fn split_trait_probes(
    probes: Vec<ProbeModel>,
) -> RunResult<(Vec<ProbeModel>, Vec<ProbeModel>)> {
    let (traits, rest): (Vec<_>, Vec<_>) = probes
        .into_iter()
        .partition(|p| matches!(p.task, Task::Trait(_)));
    let mut seen = BTreeMap::new();
    for p in &traits {
        if let Task::Trait(t) = p.task {
            if seen.insert(t, ()).is_some() {
                return Err(crate::failure::config_error(format!(
                    "two probes given for trait {t}"
                )));
            }
        }
    }
    if let Some(missing) = BigFive::ALL.iter().find(|t| !seen.contains_key(t)) {
        return Err(data_error(format!("missing trait probe for {missing}")));
    }
    Ok((traits, rest))
}

pub(crate) fn all_trait_trajectories(
    probes: &[ProbeModel],
    pairs: &[(ActivationBundle, &Conversation)],
) -> RunResult<Vec<BTreeMap<BigFive, Trajectory>>> {
    per_conversation(pairs, |b, _| Ok(trait_trajectories(probes, b)?))
}
