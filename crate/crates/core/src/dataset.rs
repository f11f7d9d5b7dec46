// SPDX-License-Identifier: MIT OR Apache-2.0

//! Window policies and assembly of labeled probe datasets from bundles.
//!
//! A window is represented by the activation row of its last token.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bundle::ActivationBundle;
use crate::error::{Error, Result};
use crate::task::Task;
use crate::transcript::{binarize_trait, Conversation, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowPolicy {
    /// The first `k` turns (1-based count); `None` is the whole conversation.
    Context { k: Option<usize> },
    /// A single turn (0-based index), read from a bundle extracted from that
    /// turn alone. `None` selects every turn the bundle covers.
    NoContext { turn: Option<usize> },
    /// The conversation minus its last `h` turns.
    Hold { h: usize },
}

impl WindowPolicy {
    pub fn full() -> Self {
        WindowPolicy::Context { k: None }
    }

    pub fn validate(&self) -> Result<()> {
        if let WindowPolicy::Context { k: Some(0) } = self {
            return Err(Error::InvalidValue("context window needs k >= 1".into()));
        }
        Ok(())
    }
}

impl fmt::Display for WindowPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowPolicy::Context { k: None } => f.write_str("context"),
            WindowPolicy::Context { k: Some(k) } => write!(f, "context:{k}"),
            WindowPolicy::NoContext { turn: None } => f.write_str("no-context"),
            WindowPolicy::NoContext { turn: Some(t) } => write!(f, "no-context:{t}"),
            WindowPolicy::Hold { h } => write!(f, "hold:{h}"),
        }
    }
}

impl FromStr for WindowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: &str| {
            a.parse::<usize>()
                .map_err(|_| Error::InvalidValue(format!("bad window argument in `{s}`")))
        };
        let policy = match (head, arg) {
            ("context", None) => WindowPolicy::Context { k: None },
            ("context", Some(a)) => WindowPolicy::Context { k: Some(num(a)?) },
            ("no-context", None) => WindowPolicy::NoContext { turn: None },
            ("no-context", Some(a)) => WindowPolicy::NoContext {
                turn: Some(num(a)?),
            },
            ("hold", Some(a)) => WindowPolicy::Hold { h: num(a)? },
            _ => return Err(Error::InvalidValue(format!("unknown window policy `{s}`"))),
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// A resolved window: turns `first..=last` of one conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub first: usize,
    pub last: usize,
    /// Token whose activation represents the window.
    pub token: usize,
}

fn span_end_token(bundle: &ActivationBundle, turn: usize) -> Result<usize> {
    bundle
        .span_for_turn(turn)
        .map(|s| s.last_token())
        .ok_or_else(|| {
            Error::InvalidValue(format!(
                "bundle `{}` has no span for turn {turn}",
                bundle.conversation_id
            ))
        })
}

/// Resolves `policy` to concrete windows for one bundle.
pub fn resolve_windows(
    bundle: &ActivationBundle,
    policy: WindowPolicy,
    conversation: &Conversation,
) -> Result<Vec<Window>> {
    policy.validate()?;
    let t = conversation.len();
    let prefix = |k: usize| -> Result<Window> {
        if k == 0 || k > t {
            return Err(Error::InvalidValue(format!(
                "prefix of {k} turns is not within conversation `{}` of {t} turns",
                conversation.id
            )));
        }
        Ok(Window {
            first: 0,
            last: k - 1,
            token: span_end_token(bundle, k - 1)?,
        })
    };
    let single = |turn: usize| -> Result<Window> {
        if turn >= t {
            return Err(Error::InvalidValue(format!(
                "turn {turn} is not within conversation `{}` of {t} turns",
                conversation.id
            )));
        }
        Ok(Window {
            first: turn,
            last: turn,
            token: span_end_token(bundle, turn)?,
        })
    };
    match policy {
        WindowPolicy::Context { k } => Ok(vec![prefix(k.unwrap_or(t))?]),
        WindowPolicy::Hold { h } => {
            if h >= t {
                return Err(Error::InvalidValue(format!(
                    "hold:{h} leaves no turns of conversation `{}` ({t} turns)",
                    conversation.id
                )));
            }
            Ok(vec![prefix(t - h)?])
        }
        WindowPolicy::NoContext { turn: Some(turn) } => Ok(vec![single(turn)?]),
        WindowPolicy::NoContext { turn: None } => bundle
            .turn_spans
            .iter()
            .map(|s| single(s.turn_index))
            .collect(),
    }
}

/// Activation row representing a single window.
pub fn representation<'a>(
    bundle: &'a ActivationBundle,
    policy: WindowPolicy,
    conversation: &Conversation,
) -> Result<&'a [f32]> {
    match resolve_windows(bundle, policy, conversation)?.as_slice() {
        [w] => Ok(bundle.row(w.token)),
        ws => Err(Error::InvalidValue(format!(
            "policy {policy} resolves to {} windows, expected one",
            ws.len()
        ))),
    }
}

/// Which window produced an example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub conversation_id: String,
    pub first_turn: usize,
    pub last_turn: usize,
    pub token: usize,
}

/// Labeled activation vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_classes: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    provenance: Vec<Provenance>,
    pub layer: Option<u32>,
    pub model_id: Option<String>,
}

impl Dataset {
    pub fn new(num_classes: usize, d: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidValue(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidValue("dimension must be positive".into()));
        }
        Ok(Dataset {
            num_classes,
            d,
            features: Vec::new(),
            labels: Vec::new(),
            provenance: Vec::new(),
            layer: None,
            model_id: None,
        })
    }

    pub fn push(&mut self, x: &[f64], label: usize, provenance: Provenance) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: x.len(),
            });
        }
        if label >= self.num_classes {
            return Err(Error::InvalidValue(format!(
                "label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite feature".into()));
        }
        self.features.extend_from_slice(x);
        self.labels.push(label);
        self.provenance.push(provenance);
        Ok(())
    }

    /// Convenience for synthetic data without real provenance.
    pub fn push_anonymous(&mut self, x: &[f64], label: usize) -> Result<()> {
        let n = self.len();
        self.push(
            x,
            label,
            Provenance {
                conversation_id: format!("#{n}"),
                first_turn: 0,
                last_turn: 0,
                token: 0,
            },
        )
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Copies the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset {
            features: Vec::with_capacity(indices.len() * self.d),
            labels: Vec::with_capacity(indices.len()),
            provenance: Vec::with_capacity(indices.len()),
            ..self.clone_empty()
        };
        for &i in indices {
            out.features.extend_from_slice(self.x(i));
            out.labels.push(self.labels[i]);
            out.provenance.push(self.provenance[i].clone());
        }
        out
    }

    fn clone_empty(&self) -> Dataset {
        Dataset {
            num_classes: self.num_classes,
            d: self.d,
            features: Vec::new(),
            labels: Vec::new(),
            provenance: Vec::new(),
            layer: self.layer,
            model_id: self.model_id.clone(),
        }
    }

    /// Seeded shuffle split; `train_fraction` of the examples go to the first part.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.min(self.len());
        (self.subset(&idx[..n_train]), self.subset(&idx[n_train..]))
    }
}

/// Result of [`assemble`]: the dataset and how many windows lacked a label.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub dataset: Dataset,
    pub skipped: usize,
}

/// Training label for the window, `None` if the conversation lacks it.
pub fn window_label(task: Task, conversation: &Conversation, window: &Window) -> Option<usize> {
    match task {
        Task::Persuasion => conversation.labels.outcome.label(),
        Task::Trait(t) => conversation
            .labels
            .ee_big5
            .as_ref()
            .and_then(|m| m.get(&t))
            .and_then(|&s| binarize_trait(s).ok()),
        Task::Strategy => conversation.turns[window.first..=window.last]
            .iter()
            .rev()
            .find(|t| t.role == Role::Persuader)
            .and_then(|t| t.strategy_label)
            .map(|s| s.class_index()),
    }
}

/// Builds a dataset with one example per (conversation, window).
///
/// Bundles are matched to conversations by id; several bundles may share an
/// id (per-turn extractions for no-context windows). Output order follows
/// `bundles`.
pub fn assemble(
    bundles: &[ActivationBundle],
    conversations: &[Conversation],
    policy: WindowPolicy,
    task: Task,
) -> Result<Assembled> {
    let by_id: HashMap<&str, &Conversation> =
        conversations.iter().map(|c| (c.id.as_str(), c)).collect();
    let first = bundles.first().ok_or(Error::NoExamples { skipped: 0 })?;
    let d = first.d;
    let mut dataset = Dataset::new(task.num_classes(), d)?;
    let uniform_layer = bundles.iter().all(|b| b.layer == first.layer);
    let uniform_model = bundles.iter().all(|b| b.model_id == first.model_id);
    dataset.layer = uniform_layer.then_some(first.layer);
    dataset.model_id = uniform_model.then(|| first.model_id.clone());

    let mut skipped = 0;
    let mut row = vec![0f64; d];
    for bundle in bundles {
        if bundle.d != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bundle.d,
            });
        }
        let conv = by_id.get(bundle.conversation_id.as_str()).ok_or_else(|| {
            Error::InvalidValue(format!(
                "bundle for unknown conversation `{}`",
                bundle.conversation_id
            ))
        })?;
        for window in resolve_windows(bundle, policy, conv)? {
            let Some(label) = window_label(task, conv, &window) else {
                skipped += 1;
                continue;
            };
            for (dst, &src) in row.iter_mut().zip(bundle.row(window.token)) {
                *dst = f64::from(src);
            }
            dataset.push(
                &row,
                label,
                Provenance {
                    conversation_id: conv.id.clone(),
                    first_turn: window.first,
                    last_turn: window.last,
                    token: window.token,
                },
            )?;
        }
    }
    if dataset.is_empty() {
        return Err(Error::NoExamples { skipped });
    }
    Ok(Assembled { dataset, skipped })
}
