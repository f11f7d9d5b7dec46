// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use persuasion_probe::analysis::{
    ablation_deltas, calibration_histogram, detect, pearson, Clause, Comparator, DetectionRule,
};
use persuasion_probe::metrics::{auroc, cohens_kappa, jsd, rescale_trait};
use persuasion_probe::trajectory::turn_trajectory;
use persuasion_probe::transcript::{binarize_trait, select_turns, RoleFilter};
use persuasion_probe::{
    decode_bundle, encode_bundle, parse_transcripts_str, predict, write_transcripts, BigFive,
    Conversation, ConversationLabels, Outcome, ProbeModel, Role, Strategy as Rhetoric, Task, Turn,
};
use persuasion_probe_testkit::{fixtures, oracle};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simplex(c: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(1e-3f64..1.0, c).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.!?'\"é日]{0,12}[a-z]".prop_map(|s| s)
}

fn scores() -> impl Strategy<Value = Option<BTreeMap<BigFive, f64>>> {
    proptest::option::of(
        proptest::collection::vec(1.0f64..=5.0, 5)
            .prop_map(|v| BigFive::ALL.iter().copied().zip(v).collect()),
    )
}

prop_compose! {
    fn conversation()(
        id in "[a-z0-9_-]{1,10}",
        turns in proptest::collection::vec(
            (any::<bool>(), text(), proptest::option::of("[a-z-]{1,12}"), proptest::option::of(0usize..3)),
            1..8,
        ),
        outcome in prop_oneof![Just(Outcome::Persuaded), Just(Outcome::Unpersuaded), Just(Outcome::Unknown)],
        ee in scores(),
        er in scores(),
    ) -> Conversation {
        Conversation {
            id,
            turns: turns
                .into_iter()
                .enumerate()
                .map(|(index, (er_role, text, sem, strat))| Turn {
                    index,
                    role: if er_role { Role::Persuader } else { Role::Persuadee },
                    text,
                    semantic_label: sem,
                    strategy_label: strat.map(|s| Rhetoric::ALL[s]),
                })
                .collect(),
            labels: ConversationLabels { outcome, ee_big5: ee, er_big5: er },
        }
    }
}

fn probe(task: Task, d: usize) -> impl Strategy<Value = ProbeModel> {
    let c = task.num_classes();
    (
        proptest::collection::vec(-5.0f64..5.0, c * d),
        proptest::collection::vec(-5.0f64..5.0, c),
    )
        .prop_map(move |(w, b)| ProbeModel::with_params(task, d, w, b).unwrap())
}

fn any_task() -> impl Strategy<Value = Task> {
    prop_oneof![
        Just(Task::Persuasion),
        Just(Task::Strategy),
        (0usize..5).prop_map(|i| Task::Trait(BigFive::ALL[i])),
    ]
}

proptest! {
    #[test]
    fn transcript_round_trip(convs in proptest::collection::vec(conversation(), 1..5)) {
        let mut convs = convs;
        for (i, c) in convs.iter_mut().enumerate() {
            c.id = format!("{i}-{}", c.id);
        }
        let text = write_transcripts(&convs);
        let back = parse_transcripts_str(&text).unwrap();
        prop_assert_eq!(back, convs);
    }

    #[test]
    fn select_turns_partitions(conv in conversation()) {
        let all = select_turns(&conv, RoleFilter::All);
        let er = select_turns(&conv, RoleFilter::Only(Role::Persuader));
        let ee = select_turns(&conv, RoleFilter::Only(Role::Persuadee));
        prop_assert_eq!(&all, &(0..conv.len()).collect::<Vec<_>>());
        let mut merged: Vec<usize> = er.iter().chain(&ee).copied().collect();
        merged.sort_unstable();
        prop_assert_eq!(merged, all);
        prop_assert!(er.iter().all(|i| !ee.contains(i)));
        prop_assert!(er.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn binarize_monotone(a in 1.0f64..=5.0, b in 1.0f64..=5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(binarize_trait(lo).unwrap() <= binarize_trait(hi).unwrap());
    }

    #[test]
    fn bundle_round_trip(seed in any::<u64>(), d in 1usize..6, turns in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = fixtures::random_bundle(&mut rng, d, turns);
        let bytes = encode_bundle(&b).unwrap();
        let back = decode_bundle(&bytes).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(encode_bundle(&back).unwrap(), bytes);
    }

    #[test]
    fn predict_on_simplex(p in any_task().prop_flat_map(|t| probe(t, 4)), h in proptest::collection::vec(-50.0f64..50.0, 4)) {
        let probs = predict(&p, &h).unwrap();
        let s: f64 = probs.as_slice().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-6);
        prop_assert!(probs.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn softmax_shift_invariant(p in probe(Task::Strategy, 3), h in proptest::collection::vec(-5.0f64..5.0, 3), shift in -20.0f64..20.0) {
        let mut q = p.clone();
        for b in q.bias_mut() {
            *b += shift;
        }
        let a = predict(&p, &h).unwrap();
        let b = predict(&q, &h).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_invariant_under_scaling(p in probe(Task::Strategy, 3), h in proptest::collection::vec(-5.0f64..5.0, 3), alpha in 0.01f64..10.0) {
        let mut q = p.clone();
        q.weights_mut().iter_mut().for_each(|w| *w *= alpha);
        q.bias_mut().iter_mut().for_each(|b| *b *= alpha);
        let a = predict(&p, &h).unwrap();
        let b = predict(&q, &h).unwrap();
        let z = p.logits(&h).unwrap();
        let mut sorted = z.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        prop_assert_eq!(a.argmax(), b.argmax());
    }

    #[test]
    fn prefix_causality(seed in any::<u64>(), turns in 1usize..6, cut in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = fixtures::random_bundle(&mut rng, 3, turns);
        let b = persuasion_probe::ActivationBundle {
            matrix: b.matrix.iter().map(|v| v.clamp(-1e3, 1e3)).collect(),
            ..b
        };
        let k = cut % turns + 1;
        let p = ProbeModel::with_params(Task::Strategy, 3, (0..9).map(|i| i as f64 * 0.1 - 0.4).collect(), vec![0.1, 0.0, -0.1]).unwrap();
        let before = turn_trajectory(&p, &b).unwrap();
        let boundary = b.turn_spans[k - 1].end;
        let mut edited = b.clone();
        for v in &mut edited.matrix[boundary * 3..] {
            *v = -*v * 3.0 + 1.0;
        }
        let after = turn_trajectory(&p, &edited).unwrap();
        prop_assert_eq!(before.len(), turns);
        prop_assert_eq!(&before.points[..k], &after.points[..k]);
    }

    #[test]
    fn auroc_matches_brute_force(data in proptest::collection::vec((0u8..6, any::<bool>()), 2..50)) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let fast = auroc(&scores, &labels).unwrap();
        prop_assert!((fast - oracle::brute_auroc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auroc_complement(data in proptest::collection::vec((-1e3f64..1e3, any::<bool>()), 2..50)) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let total = auroc(&scores, &labels).unwrap() + auroc(&neg, &labels).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jsd_symmetric_and_bounded((p, q) in (2usize..6).prop_flat_map(|c| (simplex(c), simplex(c)))) {
        let a = jsd(&p, &q).unwrap();
        let b = jsd(&q, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(jsd(&p, &p).unwrap().abs() < 1e-7);
        prop_assert!((a - oracle::js_distance(&p, &q)).abs() < 1e-9);
    }

    #[test]
    fn kappa_self_agreement(a in proptest::collection::vec(0u8..4, 2..40)) {
        prop_assume!(a.iter().any(|&x| x != a[0]));
        prop_assert!((cohens_kappa(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescale_affine(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let mixed = rescale_trait(alpha * p1 + (1.0 - alpha) * p2).unwrap();
        let combo = alpha * rescale_trait(p1).unwrap() + (1.0 - alpha) * rescale_trait(p2).unwrap();
        prop_assert!((mixed - combo).abs() < 1e-12);
    }

    #[test]
    fn detect_monotone_in_threshold(
        values in proptest::collection::vec((0.001f64..0.999, 0.001f64..0.999, any::<bool>()), 1..20),
        t_low in 0.0f64..=1.0,
        t_high in 0.0f64..=1.0,
        relax in 0.0f64..0.5,
    ) {
        let pops: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, &(a, n, persuaded))| {
                let traits = fixtures::flat_traits(&i.to_string(), 3, [0.5, 0.5, 0.5, a, n]);
                (traits, if persuaded { Outcome::Persuaded } else { Outcome::Unpersuaded })
            })
            .collect();
        let pop: Vec<_> = pops.iter().map(|(t, o)| (t, *o)).collect();
        let rule = |lt: f64, gt: f64| DetectionRule::new(
            vec![
                Clause { trait_: BigFive::Agreeableness, comparator: Comparator::Less, threshold: lt },
                Clause { trait_: BigFive::Neuroticism, comparator: Comparator::Greater, threshold: gt },
            ],
            Outcome::Unpersuaded,
        ).unwrap();
        let tight = detect(&rule(t_low, t_high), &pop, 2).unwrap();
        let loose = detect(&rule((t_low + relax).min(1.0), (t_high - relax).max(0.0)), &pop, 2).unwrap();
        for (a, b) in tight.flags.iter().zip(&loose.flags) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn pearson_affine_invariant(
        xy in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        b in -50.0f64..50.0,
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        let r = pearson(&x, &y);
        prop_assume!(r.is_some());
        let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r2 = pearson(&scaled, &y).unwrap();
        prop_assert!((r2 - a.signum() * r.unwrap()).abs() < 1e-9);
        prop_assert!((r.unwrap() - oracle::pearson_sums(&x, &y)).abs() < 1e-6);
    }

    #[test]
    fn calibration_counts(items in proptest::collection::vec(("[a-c]", 0.0f64..=1.0), 1..40)) {
        let items: Vec<(String, f64)> = items;
        let bins = calibration_histogram(&items).unwrap();
        prop_assert_eq!(bins.iter().map(|b| b.n).sum::<usize>(), items.len());
        prop_assert!(bins.iter().all(|b| (0.0..=1.0).contains(&b.proportion)));
        prop_assert!(bins.windows(2).all(|w| w[0].proportion > w[1].proportion
            || (w[0].proportion == w[1].proportion && w[0].label < w[1].label)));
    }

    #[test]
    fn ablation_self_is_zero(seed in any::<u64>(), words in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = fixtures::random_bundle(&mut rng, 2, 3);
        let b = persuasion_probe::ActivationBundle {
            matrix: b.matrix.iter().map(|v| v.clamp(-1e3, 1e3)).collect(),
            ..b
        };
        let p = ProbeModel::with_params(Task::Persuasion, 2, vec![0.3, -1.0, -0.3, 1.0], vec![0.0, 0.2]).unwrap();
        let variants: Vec<_> = (0..words).map(|w| (w, b.clone())).collect();
        let deltas = ablation_deltas(&b, &variants, &p).unwrap();
        prop_assert!(deltas.iter().all(|&(_, dp)| dp == 0.0));
    }
}
