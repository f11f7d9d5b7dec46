// SPDX-License-Identifier: MIT OR Apache-2.0

//! Derived analyses over probe trajectories: trait-threshold detection,
//! strategy × personality correlations, semantic-label calibration and
//! knock-one-out word ablation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bundle::ActivationBundle;
use crate::error::{Error, Result};
use crate::probe::{predict_row, ProbeModel};
use crate::trajectory::Trajectory;
use crate::transcript::{BigFive, Conversation, Outcome, Role, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Less,
    Greater,
}

impl Comparator {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Less => value < threshold,
            Comparator::Greater => value > threshold,
        }
    }

    fn symbol(self) -> char {
        match self {
            Comparator::Less => '<',
            Comparator::Greater => '>',
        }
    }
}

/// `P(trait) <cmp> threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clause {
    pub trait_: BigFive,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}",
            self.trait_,
            self.comparator.symbol(),
            self.threshold
        )
    }
}

impl FromStr for Clause {
    type Err = Error;

    /// Parses `agreeableness<0.2` or `neuroticism>0.8`.
    fn from_str(s: &str) -> Result<Self> {
        let (pos, comparator) = s
            .find('<')
            .map(|i| (i, Comparator::Less))
            .or_else(|| s.find('>').map(|i| (i, Comparator::Greater)))
            .ok_or_else(|| Error::InvalidValue(format!("clause `{s}` has no < or >")))?;
        let trait_ = s[..pos].trim().parse()?;
        let threshold: f64 = s[pos + 1..]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidValue(format!("bad threshold in clause `{s}`")))?;
        Ok(Clause {
            trait_,
            comparator,
            threshold,
        })
    }
}

/// A disjunction of trait clauses that flags conversations of `positive_class`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRule {
    pub clauses: Vec<Clause>,
    pub positive_class: Outcome,
}

impl DetectionRule {
    pub fn new(clauses: Vec<Clause>, positive_class: Outcome) -> Result<Self> {
        let rule = DetectionRule {
            clauses,
            positive_class,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clauses.is_empty() {
            return Err(Error::InvalidValue("detection rule has no clauses".into()));
        }
        if let Some(c) = self
            .clauses
            .iter()
            .find(|c| !(0.0..=1.0).contains(&c.threshold))
        {
            return Err(Error::InvalidValue(format!(
                "threshold outside [0, 1] in {c}"
            )));
        }
        if self.positive_class == Outcome::Unknown {
            return Err(Error::InvalidValue(
                "positive class must be a known outcome".into(),
            ));
        }
        Ok(())
    }

    /// Low agreeableness (< 0.2) or high neuroticism (> 0.8) flags unpersuasion.
    pub fn unpersuasion() -> Self {
        DetectionRule {
            clauses: vec![
                Clause {
                    trait_: BigFive::Agreeableness,
                    comparator: Comparator::Less,
                    threshold: 0.2,
                },
                Clause {
                    trait_: BigFive::Neuroticism,
                    comparator: Comparator::Greater,
                    threshold: 0.8,
                },
            ],
            positive_class: Outcome::Unpersuaded,
        }
    }

    /// High agreeableness (> 0.8) or low neuroticism (< 0.2) flags persuasion.
    pub fn persuasion() -> Self {
        DetectionRule {
            clauses: vec![
                Clause {
                    trait_: BigFive::Agreeableness,
                    comparator: Comparator::Greater,
                    threshold: 0.8,
                },
                Clause {
                    trait_: BigFive::Neuroticism,
                    comparator: Comparator::Less,
                    threshold: 0.2,
                },
            ],
            positive_class: Outcome::Persuaded,
        }
    }

    fn flags(&self, traits: &BTreeMap<BigFive, Trajectory>, turn: usize) -> Result<bool> {
        for c in &self.clauses {
            let point = traits
                .get(&c.trait_)
                .and_then(|t| t.at(turn))
                .ok_or_else(|| {
                    Error::InvalidValue(format!("no {} trajectory point at turn {turn}", c.trait_))
                })?;
            if c.comparator.holds(point.positive(), c.threshold) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub turn: usize,
    /// Absent when there are no positives.
    pub tpr: Option<f64>,
    /// Absent when there are no negatives.
    pub fpr: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    #[serde(skip)]
    pub flags: Vec<bool>,
}

/// Applies `rule` at `turn` to each conversation's trait trajectories.
///
/// Conversations with an unknown outcome get a flag but do not enter the
/// rates.
pub fn detect(
    rule: &DetectionRule,
    population: &[(&BTreeMap<BigFive, Trajectory>, Outcome)],
    turn: usize,
) -> Result<Detection> {
    rule.validate()?;
    let mut flags = Vec::with_capacity(population.len());
    let (mut tp, mut fp, mut n_pos, mut n_neg) = (0, 0, 0, 0);
    for (traits, outcome) in population {
        let flagged = rule.flags(traits, turn)?;
        flags.push(flagged);
        if *outcome == Outcome::Unknown {
            continue;
        }
        if *outcome == rule.positive_class {
            n_pos += 1;
            tp += usize::from(flagged);
        } else {
            n_neg += 1;
            fp += usize::from(flagged);
        }
    }
    let rate = |k: usize, n: usize| (n > 0).then(|| k as f64 / n as f64);
    Ok(Detection {
        turn,
        tpr: rate(tp, n_pos),
        fpr: rate(fp, n_neg),
        n_pos,
        n_neg,
        flags,
    })
}

/// Pearson correlation; `None` if either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutcomeFilter {
    #[default]
    Persuaded,
    Unpersuaded,
    All,
}

impl OutcomeFilter {
    fn admits(self, outcome: Outcome) -> bool {
        match self {
            OutcomeFilter::Persuaded => outcome == Outcome::Persuaded,
            OutcomeFilter::Unpersuaded => outcome == Outcome::Unpersuaded,
            OutcomeFilter::All => true,
        }
    }
}

impl FromStr for OutcomeFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persuaded" => Ok(OutcomeFilter::Persuaded),
            "unpersuaded" => Ok(OutcomeFilter::Unpersuaded),
            "all" => Ok(OutcomeFilter::All),
            other => Err(Error::InvalidValue(format!(
                "unknown outcome filter `{other}`"
            ))),
        }
    }
}

/// One conversation's probe outputs for [`correlate`].
#[derive(Debug, Clone, Copy)]
pub struct CorrelationInput<'a> {
    pub conversation: &'a Conversation,
    pub strategy: &'a Trajectory,
    pub traits: &'a BTreeMap<BigFive, Trajectory>,
}

/// Pearson r between persuader strategy scores (rows) and persuadee trait
/// scores (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub entries: [[Option<f64>; 5]; 3],
    pub n: [[usize; 5]; 3],
}

impl CorrelationMatrix {
    pub fn get(&self, strategy: Strategy, trait_: BigFive) -> Option<f64> {
        self.entries[strategy.class_index()][trait_ as usize]
    }
}

fn mean_over_role<'a>(
    traj: &'a Trajectory,
    conv: &Conversation,
    role: Role,
) -> impl Iterator<Item = &'a [f64]> + 'a {
    let roles: Vec<Role> = conv.turns.iter().map(|t| t.role).collect();
    traj.points
        .iter()
        .filter(move |p| p.index >= 1 && roles.get(p.index - 1) == Some(&role))
        .map(|p| p.probs.as_slice())
}

/// Per conversation, strategy class scores are averaged over persuader turns
/// and trait probabilities over persuadee turns; each matrix entry is the
/// Pearson correlation of those scores across conversations. Conversations
/// lacking turns of either role are left out.
pub fn correlate(
    inputs: &[CorrelationInput<'_>],
    filter: OutcomeFilter,
) -> Result<CorrelationMatrix> {
    let mut strategy_scores: Vec<[f64; 3]> = Vec::new();
    let mut trait_scores: Vec<[f64; 5]> = Vec::new();
    for input in inputs {
        if !filter.admits(input.conversation.labels.outcome) {
            continue;
        }
        let er: Vec<&[f64]> =
            mean_over_role(input.strategy, input.conversation, Role::Persuader).collect();
        if er.is_empty() {
            continue;
        }
        let mut s = [0.0; 3];
        for p in &er {
            for (acc, v) in s.iter_mut().zip(p.iter()) {
                *acc += v / er.len() as f64;
            }
        }
        let mut t = [0.0; 5];
        let mut complete = true;
        for (slot, trait_) in t.iter_mut().zip(BigFive::ALL) {
            let traj = input.traits.get(&trait_).ok_or_else(|| {
                Error::InvalidValue(format!(
                    "conversation `{}` lacks a {trait_} trajectory",
                    input.conversation.id
                ))
            })?;
            let ee: Vec<f64> = mean_over_role(traj, input.conversation, Role::Persuadee)
                .map(|p| p[1])
                .collect();
            if ee.is_empty() {
                complete = false;
                break;
            }
            *slot = ee.iter().sum::<f64>() / ee.len() as f64;
        }
        if complete {
            strategy_scores.push(s);
            trait_scores.push(t);
        }
    }
    if strategy_scores.len() < 3 {
        return Err(Error::Metric(format!(
            "correlation needs at least 3 conversations, have {}",
            strategy_scores.len()
        )));
    }
    let mut entries = [[None; 5]; 3];
    let n = [[strategy_scores.len(); 5]; 3];
    for (c, row) in entries.iter_mut().enumerate() {
        let sc: Vec<f64> = strategy_scores.iter().map(|s| s[c]).collect();
        for (r, entry) in row.iter_mut().enumerate() {
            let tr: Vec<f64> = trait_scores.iter().map(|t| t[r]).collect();
            *entry = pearson(&sc, &tr);
        }
    }
    Ok(CorrelationMatrix { entries, n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub label: String,
    pub proportion: f64,
    pub n: usize,
}

/// Share of utterances per semantic label scored persuasive (≥ 0.5), sorted
/// by descending proportion, then label.
pub fn calibration_histogram(items: &[(String, f64)]) -> Result<Vec<CalibrationBin>> {
    if items.is_empty() {
        return Err(Error::Metric("calibration histogram needs input".into()));
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (label, score) in items {
        if score.is_nan() {
            return Err(Error::Metric(format!("NaN score for label `{label}`")));
        }
        let e = counts.entry(label.as_str()).or_default();
        e.0 += usize::from(*score >= 0.5);
        e.1 += 1;
    }
    let mut bins: Vec<CalibrationBin> = counts
        .into_iter()
        .map(|(label, (pos, n))| CalibrationBin {
            label: label.to_owned(),
            proportion: pos as f64 / n as f64,
            n,
        })
        .collect();
    bins.sort_by(|a, b| {
        b.proportion
            .total_cmp(&a.proportion)
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(bins)
}

fn final_positive(probe: &ProbeModel, bundle: &ActivationBundle) -> Result<f64> {
    if bundle.d != probe.dim() {
        return Err(Error::DimensionMismatch {
            expected: probe.dim(),
            actual: bundle.d,
        });
    }
    let tok = bundle.last_in_span_token().ok_or_else(|| {
        Error::InvalidValue(format!(
            "bundle `{}` has no turn spans",
            bundle.conversation_id
        ))
    })?;
    Ok(predict_row(probe, bundle.row(tok))?.get(1))
}

/// `Δp = P(positive | original) − P(positive | variant)` at the final
/// in-span token, for each `(word index, variant)` pair.
pub fn ablation_deltas(
    original: &ActivationBundle,
    ablated: &[(usize, ActivationBundle)],
    probe: &ProbeModel,
) -> Result<Vec<(usize, f64)>> {
    if probe.num_classes() != 2 {
        return Err(Error::InvalidValue(format!(
            "ablation needs a binary probe, got {}",
            probe.task
        )));
    }
    let base = final_positive(probe, original)?;
    ablated
        .iter()
        .map(|(word, variant)| {
            if variant.d != original.d {
                return Err(Error::DimensionMismatch {
                    expected: original.d,
                    actual: variant.d,
                });
            }
            if variant.model_id != original.model_id {
                return Err(Error::InvalidValue(format!(
                    "variant for word {word} comes from `{}`, original from `{}`",
                    variant.model_id, original.model_id
                )));
            }
            Ok((*word, base - final_positive(probe, variant)?))
        })
        .collect()
}
