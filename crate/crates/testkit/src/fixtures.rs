// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small deterministic builders for datasets, conversations, bundles and
//! trajectories.

use std::collections::BTreeMap;

use persuasion_probe::{
    ActivationBundle, BigFive, Conversation, ConversationLabels, Dataset, Granularity, Outcome,
    ProbVector, Role, Task, Trajectory, TrajectoryPoint, TurnSpan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Two isotropic Gaussian classes centred at `∓sep·e₁` (class 1 at `+`).
pub fn gaussian(n_per_class: usize, d: usize, sep: f64, sigma: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut ds = Dataset::new(2, d).expect("valid shape");
    for i in 0..2 * n_per_class {
        let label = i % 2;
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..d)
            .map(|j| noise.sample(&mut rng) + if j == 0 { sign * sep } else { 0.0 })
            .collect();
        ds.push_anonymous(&x, label).expect("finite features");
    }
    ds
}

/// `n` points with standard normal features and uniform labels in `0..c`.
pub fn random_dataset(rng: &mut impl Rng, n: usize, d: usize, c: usize) -> Dataset {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut ds = Dataset::new(c, d).expect("valid shape");
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        ds.push_anonymous(&x, rng.random_range(0..c))
            .expect("finite features");
    }
    ds
}

/// Persuader-first alternating conversation of `t` turns.
pub fn alternating(id: &str, t: usize, outcome: Outcome) -> Conversation {
    let turns = (0..t).map(|k| {
        let role = if k % 2 == 0 {
            Role::Persuader
        } else {
            Role::Persuadee
        };
        (role, format!("turn {k} text"))
    });
    Conversation::new(
        id,
        turns,
        ConversationLabels {
            outcome,
            ..ConversationLabels::default()
        },
    )
    .expect("valid conversation")
}

/// Bundle with one scaffold token before each turn and `tokens_per_turn`
/// in-span tokens per turn. `row(turn, position)` fills in-span rows;
/// scaffold rows are zero.
pub fn span_bundle(
    id: &str,
    d: usize,
    turns: usize,
    tokens_per_turn: usize,
    mut row: impl FnMut(usize, usize) -> Vec<f32>,
) -> ActivationBundle {
    let mut token_strings = Vec::new();
    let mut turn_spans = Vec::new();
    let mut matrix = Vec::new();
    for turn in 0..turns {
        token_strings.push("<|turn|>".to_string());
        matrix.extend(std::iter::repeat_n(0.0, d));
        let start = token_strings.len();
        for pos in 0..tokens_per_turn {
            token_strings.push(format!("t{turn}.{pos}"));
            let r = row(turn, pos);
            assert_eq!(r.len(), d, "row width");
            matrix.extend(r);
        }
        turn_spans.push(TurnSpan {
            turn_index: turn,
            start,
            end: token_strings.len(),
        });
    }
    ActivationBundle {
        conversation_id: id.to_string(),
        model_id: "fixture".to_string(),
        layer: 0,
        d,
        token_strings,
        turn_spans,
        matrix,
        extra: Default::default(),
    }
}

/// Random valid bundle: `turns` turns of 1–4 tokens, scaffold tokens
/// sprinkled between spans, entries spanning many magnitudes.
pub fn random_bundle(rng: &mut impl Rng, d: usize, turns: usize) -> ActivationBundle {
    let mut token_strings = Vec::new();
    let mut turn_spans = Vec::new();
    for turn in 0..turns {
        for _ in 0..rng.random_range(0..3) {
            token_strings.push(random_token(rng));
        }
        let start = token_strings.len();
        for _ in 0..rng.random_range(1..=4) {
            token_strings.push(random_token(rng));
        }
        turn_spans.push(TurnSpan {
            turn_index: turn,
            start,
            end: token_strings.len(),
        });
    }
    for _ in 0..rng.random_range(0..2) {
        token_strings.push(random_token(rng));
    }
    let matrix = (0..token_strings.len() * d)
        .map(|_| {
            let mantissa: f32 = rng.random_range(-1.0..1.0);
            mantissa * 10f32.powi(rng.random_range(-30..30))
        })
        .collect();
    let mut extra = serde_json::Map::new();
    if rng.random_bool(0.5) {
        extra.insert(
            "render".into(),
            serde_json::json!({"template": "chat", "n": turns}),
        );
    }
    ActivationBundle {
        conversation_id: format!("conv-{}", rng.random::<u32>()),
        model_id: "random-model".to_string(),
        layer: rng.random_range(0..64),
        d,
        token_strings,
        turn_spans,
        matrix,
        extra,
    }
}

fn random_token(rng: &mut impl Rng) -> String {
    const PIECES: [&str; 8] = ["the", " Ġdonate", "é", "\n", "\"", "日本", "<|eot|>", ""];
    PIECES[rng.random_range(0..PIECES.len())].to_string()
}

/// Turn trajectory `1..=t` holding `probs` at every point.
pub fn flat_trajectory(id: &str, task: Task, t: usize, probs: &[f64]) -> Trajectory {
    Trajectory {
        conversation_id: id.to_string(),
        task,
        points: (1..=t)
            .map(|k| {
                TrajectoryPoint::new(
                    Granularity::Turn,
                    k,
                    ProbVector::new(probs.to_vec()).expect("valid probabilities"),
                )
            })
            .collect(),
    }
}

/// Five flat trait trajectories; `values[r]` is P(high) for trait `r`.
pub fn flat_traits(id: &str, t: usize, values: [f64; 5]) -> BTreeMap<BigFive, Trajectory> {
    BigFive::ALL
        .iter()
        .zip(values)
        .map(|(&tr, v)| (tr, flat_trajectory(id, Task::Trait(tr), t, &[1.0 - v, v])))
        .collect()
}
