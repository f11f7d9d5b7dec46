// SPDX-License-Identifier: MIT OR Apache-2.0

//! Applying probes along a conversation.
//!
//! Turn-level points use the 1-based prefix length `k` as their index: point
//! `k` reads the last token of turn `k` (0-based turn `k − 1`), so it only
//! depends on the first `k` turns. Token-level points use the absolute token
//! position and skip scaffold tokens outside every turn span.

use std::collections::BTreeMap;
use std::fmt;

use log::warn;

use crate::bundle::ActivationBundle;
use crate::error::{Error, Result};
use crate::probe::{predict_row, ProbVector, ProbeModel};
use crate::task::Task;
use crate::transcript::{BigFive, Conversation, RoleFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    ConversationEnd,
    Turn,
    Token,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::ConversationEnd => "conversation_end",
            Granularity::Turn => "turn",
            Granularity::Token => "token",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conversation_end" => Ok(Granularity::ConversationEnd),
            "turn" => Ok(Granularity::Turn),
            "token" => Ok(Granularity::Token),
            other => Err(Error::InvalidValue(format!(
                "unknown granularity `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub granularity: Granularity,
    pub index: usize,
    pub probs: ProbVector,
    pub predicted_class: usize,
}

impl TrajectoryPoint {
    pub fn new(granularity: Granularity, index: usize, probs: ProbVector) -> Self {
        let predicted_class = probs.argmax();
        TrajectoryPoint {
            granularity,
            index,
            probs,
            predicted_class,
        }
    }

    /// Probability of class 1 (persuaded / high trait) for binary tasks.
    pub fn positive(&self) -> f64 {
        self.probs.get(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub conversation_id: String,
    pub task: Task,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point with the given index, if present.
    pub fn at(&self, index: usize) -> Option<&TrajectoryPoint> {
        self.points
            .binary_search_by_key(&index, |p| p.index)
            .ok()
            .map(|i| &self.points[i])
    }

    /// Largest index, i.e. the turn count for complete turn trajectories.
    pub fn max_index(&self) -> Option<usize> {
        self.points.last().map(|p| p.index)
    }
}

fn check_compat(probe: &ProbeModel, bundle: &ActivationBundle) -> Result<()> {
    if probe.dim() != bundle.d {
        return Err(Error::DimensionMismatch {
            expected: probe.dim(),
            actual: bundle.d,
        });
    }
    if !probe.model_id.is_empty() && probe.model_id != bundle.model_id {
        warn!(
            "probe trained on `{}` applied to `{}` activations ({})",
            probe.model_id, bundle.model_id, bundle.conversation_id
        );
    }
    if probe.layer_index != bundle.layer {
        warn!(
            "probe layer {} differs from bundle layer {} ({})",
            probe.layer_index, bundle.layer, bundle.conversation_id
        );
    }
    Ok(())
}

/// Last token of each turn, requiring spans for turns `0..T` without gaps.
fn turn_end_tokens(bundle: &ActivationBundle) -> Result<Vec<usize>> {
    bundle
        .turn_spans
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.turn_index == i {
                Ok(s.last_token())
            } else {
                Err(Error::InvalidValue(format!(
                    "bundle `{}` has no span for turn {i}",
                    bundle.conversation_id
                )))
            }
        })
        .collect()
}

/// One point per prefix length `k = 1..=T`.
pub fn turn_trajectory(probe: &ProbeModel, bundle: &ActivationBundle) -> Result<Trajectory> {
    check_compat(probe, bundle)?;
    let points = turn_end_tokens(bundle)?
        .into_iter()
        .enumerate()
        .map(|(i, tok)| {
            predict_row(probe, bundle.row(tok))
                .map(|p| TrajectoryPoint::new(Granularity::Turn, i + 1, p))
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory {
        conversation_id: bundle.conversation_id.clone(),
        task: probe.task,
        points,
    })
}

/// The probe applied once, at the final in-span token. Index is `T`.
pub fn conversation_end(probe: &ProbeModel, bundle: &ActivationBundle) -> Result<TrajectoryPoint> {
    check_compat(probe, bundle)?;
    let tok = bundle
        .last_in_span_token()
        .ok_or_else(|| Error::InvalidValue("bundle has no turn spans".into()))?;
    let p = predict_row(probe, bundle.row(tok))?;
    Ok(TrajectoryPoint::new(
        Granularity::ConversationEnd,
        bundle.turn_spans.len(),
        p,
    ))
}

/// One point per in-span token, in token order.
pub fn token_trajectory(probe: &ProbeModel, bundle: &ActivationBundle) -> Result<Trajectory> {
    check_compat(probe, bundle)?;
    let points = bundle
        .in_span_tokens()
        .map(|tok| {
            predict_row(probe, bundle.row(tok))
                .map(|p| TrajectoryPoint::new(Granularity::Token, tok, p))
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory {
        conversation_id: bundle.conversation_id.clone(),
        task: probe.task,
        points,
    })
}

/// Turn trajectories for the five trait probes, keyed by trait.
pub fn trait_trajectories(
    probes: &[ProbeModel],
    bundle: &ActivationBundle,
) -> Result<BTreeMap<BigFive, Trajectory>> {
    let mut out = BTreeMap::new();
    for probe in probes {
        let Task::Trait(t) = probe.task else {
            return Err(Error::InvalidValue(format!(
                "expected a trait probe, got {}",
                probe.task
            )));
        };
        if out.contains_key(&t) {
            return Err(Error::InvalidValue(format!(
                "duplicate probe for trait {t}"
            )));
        }
        out.insert(t, turn_trajectory(probe, bundle)?);
    }
    if let Some(missing) = BigFive::ALL.iter().find(|t| !out.contains_key(t)) {
        return Err(Error::InvalidValue(format!(
            "missing probe for trait {missing}"
        )));
    }
    Ok(out)
}

/// Strategy distribution per turn, optionally only at turns of one role.
pub fn strategy_trajectory(
    probe: &ProbeModel,
    bundle: &ActivationBundle,
    conversation: &Conversation,
    filter: RoleFilter,
) -> Result<Trajectory> {
    if probe.task != Task::Strategy {
        return Err(Error::InvalidValue(format!(
            "expected a strategy probe, got {}",
            probe.task
        )));
    }
    let mut traj = turn_trajectory(probe, bundle)?;
    if let RoleFilter::Only(role) = filter {
        if conversation.len() < traj.len() {
            return Err(Error::InvalidValue(format!(
                "conversation `{}` has {} turns, bundle covers {}",
                conversation.id,
                conversation.len(),
                traj.len()
            )));
        }
        traj.points
            .retain(|p| conversation.turns[p.index - 1].role == role);
    }
    Ok(traj)
}
