// SPDX-License-Identifier: MIT OR Apache-2.0

//! The miniature end-to-end corpus: 12 synthetic conversations with
//! hand-planted d = 8 activations at layers 1 and 2, plus knock-one-out
//! variants for two conversations at layer 1.
//!
//! Feature layout per in-span token at (1-based) turn k:
//! - dim 0: `±0.4·k` by outcome, plus `0.5` per "yes"/"sure" and `−0.5` per
//!   "no" seen so far;
//! - dims 1–5: `±0.8` for high/low persuadee Big-5 score;
//! - dims 6–7: code of the latest persuader strategy (logical `(1,0)`,
//!   emotional `(0,1)`, credibility `(−1,−1)`).
//!
//! Every row gets uniform noise of half-width `0.1` at layer 1 and `0.3` at
//! layer 2, seeded per (conversation, layer, turn, position).

use std::fs;
use std::io;
use std::path::Path;

use persuasion_probe::{
    encode_bundle, write_transcripts, ActivationBundle, BigFive, Conversation, ConversationLabels,
    Outcome, Role, Strategy, TurnSpan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONVERSATIONS: usize = 12;
pub const DIM: usize = 8;
pub const LAYERS: [u32; 2] = [1, 2];
pub const MODEL_ID: &str = "mini-synthetic";
/// Conversations with ablation variants (layer 1 only).
pub const ABLATED: [&str; 2] = ["mini-00", "mini-01"];

const PERSUADER: [&str; 3] = [
    "hello would you donate",
    "every dollar helps children",
    "our charity is audited",
];
const PERSUADED: [&str; 3] = ["tell me more", "yes that sounds good", "sure i will donate"];
const UNPERSUADED: [&str; 3] = ["tell me more", "no i am busy", "no thanks not today"];
const PERSUADED_TAGS: [&str; 3] = ["ask-question", "positive-reaction", "agree-donation"];
const UNPERSUADED_TAGS: [&str; 3] = ["ask-question", "negative-reaction", "disagree-donation"];

pub struct MiniCorpus {
    pub conversations: Vec<Conversation>,
    /// `(file name, bundle)` in file-name order.
    pub bundles: Vec<(String, ActivationBundle)>,
}

fn score(i: usize, r: usize) -> f64 {
    1.0 + ((i * 3 + r * 5) % 9) as f64 * 0.5
}

fn conversation(i: usize) -> Conversation {
    let persuaded = i.is_multiple_of(2);
    let t = if i >= 10 { 4 } else { 6 };
    let ee = BigFive::ALL
        .iter()
        .enumerate()
        .map(|(r, &tr)| (tr, score(i, r)))
        .collect();
    let er = i
        .is_multiple_of(4)
        .then(|| BigFive::ALL.iter().map(|&tr| (tr, 3.0)).collect());
    let labels = ConversationLabels {
        outcome: if persuaded {
            Outcome::Persuaded
        } else {
            Outcome::Unpersuaded
        },
        ee_big5: Some(ee),
        er_big5: er,
    };
    let replies = if persuaded { PERSUADED } else { UNPERSUADED };
    let tags = if persuaded {
        PERSUADED_TAGS
    } else {
        UNPERSUADED_TAGS
    };
    let turns = (0..t).map(|k| {
        if k % 2 == 0 {
            (Role::Persuader, PERSUADER[k / 2].to_string())
        } else {
            (Role::Persuadee, replies[k / 2].to_string())
        }
    });
    let mut conv =
        Conversation::new(format!("mini-{i:02}"), turns, labels).expect("valid conversation");
    for turn in &mut conv.turns {
        let m = turn.index / 2;
        match turn.role {
            Role::Persuader => turn.strategy_label = Some(Strategy::ALL[(i + m) % 3]),
            Role::Persuadee => turn.semantic_label = Some(tags[m].to_string()),
        }
    }
    conv
}

fn strategy_code(s: Option<Strategy>) -> [f64; 2] {
    match s {
        None => [0.0, 0.0],
        Some(Strategy::Logical) => [1.0, 0.0],
        Some(Strategy::Emotional) => [0.0, 1.0],
        Some(Strategy::Credibility) => [-1.0, -1.0],
    }
}

/// Renders `conv` at `layer`, optionally with word `skip` (global
/// whitespace-word index) deleted.
fn bundle(i: usize, conv: &Conversation, layer: u32, skip: Option<usize>) -> ActivationBundle {
    let sign = if conv.labels.outcome == Outcome::Persuaded {
        1.0
    } else {
        -1.0
    };
    let width = if layer == 1 { 0.1 } else { 0.3 };
    let traits: Vec<f64> = BigFive::ALL
        .iter()
        .map(|tr| {
            let s = conv.labels.ee_big5.as_ref().expect("scores")[tr];
            if s >= 3.0 {
                0.8
            } else {
                -0.8
            }
        })
        .collect();
    let noise = |turn: usize, pos: usize| {
        let seed =
            ((i as u64) << 40) | (u64::from(layer) << 32) | ((turn as u64) << 16) | pos as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..DIM)
            .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * width)
            .collect::<Vec<f64>>()
    };

    let mut token_strings = Vec::new();
    let mut turn_spans = Vec::new();
    let mut matrix: Vec<f32> = Vec::new();
    let mut word = 0;
    let mut sentiment = 0.0;
    let mut strategy = None;
    for turn in &conv.turns {
        let k = turn.index + 1;
        if turn.role == Role::Persuader {
            strategy = turn.strategy_label;
        }
        token_strings.push("<|turn|>".to_string());
        matrix.extend(noise(turn.index, 0).iter().map(|&v| v as f32));
        let start = token_strings.len();
        for w in turn.text.split_whitespace() {
            let this = word;
            word += 1;
            if skip == Some(this) {
                continue;
            }
            sentiment += match w {
                "yes" | "sure" => 0.5,
                "no" => -0.5,
                _ => 0.0,
            };
            let n = noise(turn.index, token_strings.len() - start + 1);
            let code = strategy_code(strategy);
            let clean = std::iter::once(sign * 0.4 * k as f64 + sentiment)
                .chain(traits.iter().copied())
                .chain(code);
            matrix.extend(clean.zip(n).map(|(c, e)| (c + e) as f32));
            token_strings.push(format!(" {w}"));
        }
        turn_spans.push(TurnSpan {
            turn_index: turn.index,
            start,
            end: token_strings.len(),
        });
    }
    let mut extra = serde_json::Map::new();
    extra.insert("generator".into(), "mini-corpus".into());
    if let Some(w) = skip {
        extra.insert("ablated_word".into(), w.into());
    }
    ActivationBundle {
        conversation_id: conv.id.clone(),
        model_id: MODEL_ID.to_string(),
        layer,
        d: DIM,
        token_strings,
        turn_spans,
        matrix,
        extra,
    }
}

pub fn mini_corpus() -> MiniCorpus {
    let conversations: Vec<Conversation> = (0..CONVERSATIONS).map(conversation).collect();
    let mut bundles = Vec::new();
    for (i, conv) in conversations.iter().enumerate() {
        for layer in LAYERS {
            bundles.push((
                format!("{}.L{layer}.ppab", conv.id),
                bundle(i, conv, layer, None),
            ));
        }
        if ABLATED.contains(&conv.id.as_str()) {
            for w in 0..conv.words().len() {
                bundles.push((
                    format!("{}.L1.abl{w}.ppab", conv.id),
                    bundle(i, conv, 1, Some(w)),
                ));
            }
        }
    }
    bundles.sort_by(|a, b| a.0.cmp(&b.0));
    MiniCorpus {
        conversations,
        bundles,
    }
}

/// Writes `transcripts.jsonl` and `bundles/*.ppab` under `dir`.
pub fn write_mini_corpus(dir: &Path) -> io::Result<()> {
    let corpus = mini_corpus();
    fs::create_dir_all(dir.join("bundles"))?;
    fs::write(
        dir.join("transcripts.jsonl"),
        write_transcripts(&corpus.conversations),
    )?;
    for (name, b) in &corpus.bundles {
        let bytes = encode_bundle(b).map_err(io::Error::other)?;
        fs::write(dir.join("bundles").join(name), bytes)?;
    }
    Ok(())
}

/// One-turn conversations whose single activation row is a draw from the
/// Gaussian fixture (class 1 = persuaded at `+sep·e₁`). Writes
/// `transcripts.jsonl` and `bundles/g-<i>.L0.ppab` under `dir`.
pub fn write_gaussian_corpus(
    dir: &Path,
    n_per_class: usize,
    d: usize,
    sep: f64,
    sigma: f64,
    seed: u64,
) -> io::Result<()> {
    let data = crate::fixtures::gaussian(n_per_class, d, sep, sigma, seed);
    fs::create_dir_all(dir.join("bundles"))?;
    let mut convs = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let outcome = if data.label(i) == 1 {
            Outcome::Persuaded
        } else {
            Outcome::Unpersuaded
        };
        let conv = Conversation::new(
            format!("g-{i:04}"),
            [(Role::Persuader, "please donate".to_string())],
            ConversationLabels {
                outcome,
                ..ConversationLabels::default()
            },
        )
        .map_err(io::Error::other)?;
        let bundle = ActivationBundle {
            conversation_id: conv.id.clone(),
            model_id: "gaussian".to_string(),
            layer: 0,
            d,
            token_strings: vec!["please donate".to_string()],
            turn_spans: vec![TurnSpan {
                turn_index: 0,
                start: 0,
                end: 1,
            }],
            matrix: data.x(i).iter().map(|&v| v as f32).collect(),
            extra: Default::default(),
        };
        let bytes = encode_bundle(&bundle).map_err(io::Error::other)?;
        fs::write(
            dir.join("bundles").join(format!("{}.L0.ppab", conv.id)),
            bytes,
        )?;
        convs.push(conv);
    }
    fs::write(dir.join("transcripts.jsonl"), write_transcripts(&convs))
}
