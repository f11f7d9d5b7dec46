// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation metrics and per-turn curves.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use crate::transcript::Outcome;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub turn: usize,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmittedPoint {
    pub turn: usize,
    pub reason: String,
}

/// A metric evaluated at each turn over the conversations that reach it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnCurve {
    pub metric: String,
    pub points: Vec<CurvePoint>,
    pub omitted: Vec<OmittedPoint>,
}

impl TurnCurve {
    fn new(metric: &str) -> Self {
        TurnCurve {
            metric: metric.to_owned(),
            points: Vec::new(),
            omitted: Vec::new(),
        }
    }

    pub fn value_at(&self, turn: usize) -> Option<f64> {
        self.points.iter().find(|p| p.turn == turn).map(|p| p.value)
    }
}

fn metric_err(msg: impl Into<String>) -> Error {
    Error::Metric(msg.into())
}

/// Area under the ROC curve via the Mann–Whitney statistic.
///
/// Ties share the average rank, which credits each tied positive–negative
/// pair with one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(metric_err(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(metric_err("non-finite score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(metric_err(
            "AUROC needs at least one positive and one negative label",
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid * pos_in_group as f64;
        i = j;
    }
    let n_pos_f = n_pos as f64;
    let u = rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0;
    Ok(u / (n_pos_f * n_neg as f64))
}

/// Maps a probability onto the 1–5 Big-5 scale: `1 + 4p`.
pub fn rescale_trait(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(metric_err(format!("probability {p} outside [0, 1]")));
    }
    Ok(1.0 + 4.0 * p)
}

/// Per-turn mean squared error between rescaled trait probabilities and
/// annotated 1–5 scores. Each entry pairs a trait trajectory with its truth.
pub fn trait_mse_curve(series: &[(&Trajectory, f64)]) -> Result<TurnCurve> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (traj, truth) in series {
        if !(1.0..=5.0).contains(truth) {
            return Err(metric_err(format!(
                "truth score {truth} for `{}` outside [1, 5]",
                traj.conversation_id
            )));
        }
        for p in &traj.points {
            let err = rescale_trait(p.positive())? - truth;
            let e = sums.entry(p.index).or_default();
            e.0 += err * err;
            e.1 += 1;
        }
    }
    if sums.is_empty() {
        return Err(metric_err("no predictions to compare"));
    }
    let mut curve = TurnCurve::new("trait_mse");
    curve.points = sums
        .into_iter()
        .map(|(turn, (s, n))| CurvePoint {
            turn,
            value: s / n as f64,
            n,
        })
        .collect();
    Ok(curve)
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(metric_err(format!(
            "{name} has negative or non-finite entries"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(metric_err(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

fn kl2(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).log2())
        .sum()
}

/// Jensen–Shannon distance with base-2 logarithms, in `[0, 1]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let div = 0.5 * kl2(p, &m) + 0.5 * kl2(q, &m);
    Ok(div.clamp(0.0, 1.0).sqrt())
}

fn mean_distribution<'a>(vs: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for v in vs {
        if sum.is_empty() {
            sum = vec![0.0; v.len()];
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    debug_assert!(n > 0);
    // mean of simplex points, renormalized against rounding drift
    let total: f64 = sum.iter().sum();
    sum.iter().map(|s| s / total).collect()
}

/// Per-turn distance between mean strategy distributions of two sources.
///
/// Trajectories are matched by conversation id; at each turn both means are
/// taken over the conversations for which both sides have a point.
pub fn strategy_jsd_curve(subject: &[Trajectory], reference: &[Trajectory]) -> Result<TurnCurve> {
    let refs: HashMap<&str, &Trajectory> = reference
        .iter()
        .map(|t| (t.conversation_id.as_str(), t))
        .collect();
    let pairs: Vec<(&Trajectory, &Trajectory)> = subject
        .iter()
        .filter_map(|s| refs.get(s.conversation_id.as_str()).map(|r| (s, *r)))
        .collect();
    let turns: BTreeSet<usize> = pairs
        .iter()
        .flat_map(|(s, r)| s.points.iter().chain(&r.points).map(|p| p.index))
        .collect();

    let mut curve = TurnCurve::new("strategy_jsd");
    for turn in turns {
        let matched: Vec<(&[f64], &[f64])> = pairs
            .iter()
            .filter_map(|(s, r)| Some((s.at(turn)?.probs.as_slice(), r.at(turn)?.probs.as_slice())))
            .collect();
        if matched.is_empty() {
            curve.omitted.push(OmittedPoint {
                turn,
                reason: "no conversation has both subject and reference points".into(),
            });
            continue;
        }
        let ms = mean_distribution(matched.iter().map(|(s, _)| *s));
        let mr = mean_distribution(matched.iter().map(|(_, r)| *r));
        curve.points.push(CurvePoint {
            turn,
            value: jsd(&ms, &mr)?,
            n: matched.len(),
        });
    }
    Ok(curve)
}

/// Chance-corrected agreement `(p_o − p_e) / (1 − p_e)`.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(metric_err(format!(
            "label sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(metric_err("kappa needs at least one label pair"));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let p_o = agree / n;

    let mut counts: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for y in b {
        counts.entry(y).or_default().1 += 1;
    }
    let p_e: f64 = counts
        .values()
        .map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n))
        .sum();

    if (1.0 - p_e).abs() < 1e-15 {
        return if agree == n {
            Ok(1.0)
        } else {
            Err(metric_err("kappa undefined: chance agreement is 1"))
        };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub threshold: f64,
    pub accuracy: f64,
    /// Absent when nothing is predicted positive.
    pub precision: Option<f64>,
    /// Absent when there are no positive labels.
    pub recall: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Thresholded binary report; a score equal to the threshold is positive.
pub fn classification_report(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ClassificationReport> {
    if scores.len() != labels.len() {
        return Err(metric_err(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(metric_err(
            "classification report needs at least one example",
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(metric_err("NaN score"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(ClassificationReport {
        threshold,
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Per-turn AUROC of P(persuaded) against outcomes. Conversations with an
/// unknown outcome are ignored; turns where only one class survives are
/// omitted with a reason.
pub fn auroc_curve(trajectories: &[Trajectory], outcomes: &[Outcome]) -> Result<TurnCurve> {
    if trajectories.len() != outcomes.len() {
        return Err(metric_err(format!(
            "{} trajectories but {} outcomes",
            trajectories.len(),
            outcomes.len()
        )));
    }
    let labeled: Vec<(&Trajectory, bool)> = trajectories
        .iter()
        .zip(outcomes)
        .filter_map(|(t, o)| o.label().map(|l| (t, l == 1)))
        .collect();
    let turns: BTreeSet<usize> = labeled
        .iter()
        .flat_map(|(t, _)| t.points.iter().map(|p| p.index))
        .collect();

    let mut curve = TurnCurve::new("auroc");
    for turn in turns {
        let (scores, labels): (Vec<f64>, Vec<bool>) = labeled
            .iter()
            .filter_map(|(t, l)| t.at(turn).map(|p| (p.positive(), *l)))
            .unzip();
        let n_pos = labels.iter().filter(|&&l| l).count();
        if n_pos == 0 || n_pos == labels.len() {
            curve.omitted.push(OmittedPoint {
                turn,
                reason: format!(
                    "single-class population ({n_pos} persuaded of {})",
                    labels.len()
                ),
            });
            continue;
        }
        curve.points.push(CurvePoint {
            turn,
            value: auroc(&scores, &labels)?,
            n: labels.len(),
        });
    }
    Ok(curve)
}
