// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use persuasion_probe::analysis::{detect, pearson, DetectionRule};
use persuasion_probe::metrics::{auroc, cohens_kappa, jsd, rescale_trait};
use persuasion_probe::probe::{accuracy, gradients};
use persuasion_probe::trajectory::{token_trajectory, turn_trajectory};
use persuasion_probe::{
    decode_bundle, encode_bundle, predict, train, ActivationBundle, Error, Outcome, ProbeModel,
    Task, TrainConfig,
};
use persuasion_probe_testkit::{fixtures, oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    check: fn() -> Verdict,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "gradient-finite-differences",
            budget: Some(Duration::from_secs(5)),
            check: gradient_fd,
        },
        Criterion {
            name: "convex-training",
            budget: Some(Duration::from_secs(30)),
            check: convex_training,
        },
        Criterion {
            name: "auroc-oracle",
            budget: None,
            check: auroc_oracle,
        },
        Criterion {
            name: "jsd-suite",
            budget: None,
            check: jsd_suite,
        },
        Criterion {
            name: "kappa-hand-cases",
            budget: None,
            check: kappa_cases,
        },
        Criterion {
            name: "rescale-endpoints",
            budget: None,
            check: rescale_endpoints,
        },
        Criterion {
            name: "bundle-format",
            budget: None,
            check: bundle_format,
        },
        Criterion {
            name: "trajectory-contracts",
            budget: None,
            check: trajectory_contracts,
        },
        Criterion {
            name: "detection-construction",
            budget: None,
            check: detection_construction,
        },
        Criterion {
            name: "correlation-oracle",
            budget: None,
            check: correlation_oracle,
        },
        Criterion {
            name: "end-to-end-smoke",
            budget: Some(Duration::from_secs(60)),
            check: end_to_end,
        },
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.check))
            .unwrap_or_else(|e| Err(panic_message(e.as_ref())));
        let elapsed = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {} ({detail}; {elapsed:.2?})", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL {} ({why}; {elapsed:.2?})", c.name);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn gradient_fd() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for instance in 0..50 {
        let (c, task) = if instance % 2 == 0 {
            (2, Task::Persuasion)
        } else {
            (3, Task::Strategy)
        };
        let d = 16;
        let data = fixtures::random_dataset(&mut rng, 8, d, c);
        let w: Vec<f64> = (0..c * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe = ProbeModel::with_params(task, d, w, b).map_err(|e| e.to_string())?;
        let g = gradients(&probe, &data, 0.0).map_err(|e| e.to_string())?;
        let (nw, nb) = oracle::numeric_gradient(&probe, 1e-5, |p| oracle::objective(p, &data, 0.0));
        for (a, n) in g.weights.iter().chain(&g.bias).zip(nw.iter().chain(&nb)) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-8));
        }
    }
    ensure!(worst < 1e-4, "max relative error {worst:e}");
    Ok(format!("50 instances, max relative error {worst:.2e}"))
}

fn convex_training() -> Verdict {
    let train_set = fixtures::gaussian(200, 8, 2.0, 0.5, 20_240_611);
    let test_set = fixtures::gaussian(200, 8, 2.0, 0.5, 20_240_612);
    let cfg = TrainConfig::default();
    ensure!(
        cfg.epochs == 200 && cfg.learning_rate == 1e-3,
        "defaults changed"
    );
    let t = train(&train_set, Task::Persuasion, &cfg).map_err(|e| e.to_string())?;
    let acc = accuracy(&t.probe, &train_set).map_err(|e| e.to_string())?;
    let scores: Vec<f64> = (0..test_set.len())
        .map(|i| predict(&t.probe, test_set.x(i)).map(|p| p.get(1)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let labels: Vec<bool> = test_set.labels().iter().map(|&l| l == 1).collect();
    let held_out = auroc(&scores, &labels).map_err(|e| e.to_string())?;
    ensure!(acc >= 0.99, "train accuracy {acc}");
    ensure!(held_out >= 0.99, "held-out AUROC {held_out}");
    Ok(format!(
        "train accuracy {acc:.4}, held-out AUROC {held_out:.4}"
    ))
}

fn auroc_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(4..80);
        // a coarse grid forces ties
        let mut scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..8) as f64 / 7.0)
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        scores[1] = scores[0];
        let fast = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((fast - oracle::brute_auroc(&scores, &labels)).abs());
    }
    ensure!(worst < 1e-12, "max difference {worst:e}");
    Ok(format!(
        "100 instances with cross-class ties, max difference {worst:.1e}"
    ))
}

fn jsd_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let simplex = |rng: &mut ChaCha8Rng, c: usize| {
        let v: Vec<f64> = (0..c)
            .map(|_| rng.random_range(0.0..1.0f64) + 1e-9)
            .collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    for _ in 0..500 {
        let c = rng.random_range(2..6);
        let (p, q) = (simplex(&mut rng, c), simplex(&mut rng, c));
        let pq = jsd(&p, &q).map_err(|e| e.to_string())?;
        let qp = jsd(&q, &p).map_err(|e| e.to_string())?;
        ensure!(pq == qp, "asymmetric: {pq} vs {qp}");
        ensure!((0.0..=1.0).contains(&pq), "out of bounds: {pq}");
        ensure!(
            jsd(&p, &p).map_err(|e| e.to_string())? == 0.0,
            "jsd(p, p) != 0"
        );
        ensure!(
            (pq - oracle::js_distance(&p, &q)).abs() < 1e-12,
            "disagrees with oracle"
        );
    }
    let ours = jsd(&[0.5, 0.5], &[1.0, 0.0]).map_err(|e| e.to_string())?;
    let direct = oracle::js_distance(&[0.5, 0.5], &[1.0, 0.0]);
    ensure!(
        (ours - direct).abs() < 1e-6,
        "derived case {ours} vs oracle {direct}"
    );
    ensure!(
        (jsd(&[1.0, 0.0], &[0.0, 1.0]).map_err(|e| e.to_string())? - 1.0).abs() < 1e-12,
        "disjoint support != 1"
    );
    Ok(format!(
        "500 random pairs; jsd((.5,.5),(1,0)) = {ours:.7}, oracle {direct:.7}"
    ))
}

fn kappa_cases() -> Verdict {
    let cases: [(&[u8], &[u8], f64); 3] = [
        (&[0, 1, 2, 1], &[0, 1, 2, 1], 1.0),
        // p_o = 3/4, p_e = 1/2
        (&[0, 0, 1, 1], &[0, 1, 1, 1], 0.5),
        (&[0, 1], &[1, 0], -1.0),
    ];
    for (a, b, want) in cases {
        let k = cohens_kappa(a, b).map_err(|e| e.to_string())?;
        ensure!(k == want, "kappa({a:?}, {b:?}) = {k}, want {want}");
    }
    Ok("1.0, 0.5, -1.0".into())
}

fn rescale_endpoints() -> Verdict {
    for (p, want) in [(0.0, 1.0), (0.5, 3.0), (1.0, 5.0)] {
        let got = rescale_trait(p).map_err(|e| e.to_string())?;
        ensure!(got == want, "rescale({p}) = {got}");
    }
    ensure!(rescale_trait(1.5).is_err(), "out-of-range input accepted");
    Ok("0->1, 0.5->3, 1->5".into())
}

fn bundle_format() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let d = rng.random_range(1..12);
        let turns = rng.random_range(1..8);
        let b = fixtures::random_bundle(&mut rng, d, turns);
        let bytes = encode_bundle(&b).map_err(|e| e.to_string())?;
        let back = decode_bundle(&bytes).map_err(|e| format!("bundle {i}: {e}"))?;
        let bits = |x: &ActivationBundle| x.matrix.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure!(bits(&back) == bits(&b), "bundle {i}: matrix bits differ");
        ensure!(back == b, "bundle {i}: metadata differs");
        ensure!(
            encode_bundle(&back).map_err(|e| e.to_string())? == bytes,
            "bundle {i}: re-encoding differs"
        );
    }

    let b = fixtures::random_bundle(&mut rng, 4, 3);
    let good = encode_bundle(&b).map_err(|e| e.to_string())?;
    let mut magic = good.clone();
    magic[0] = b'X';
    ensure!(
        matches!(decode_bundle(&magic), Err(Error::BadMagic { .. })),
        "bad magic not rejected"
    );
    let mut version = good.clone();
    version[4..8].copy_from_slice(&2u32.to_le_bytes());
    ensure!(
        matches!(
            decode_bundle(&version),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ),
        "bad version not rejected"
    );
    let short = &good[..good.len() - 1];
    ensure!(
        matches!(decode_bundle(short), Err(Error::Truncated { .. })),
        "truncation not rejected"
    );
    let mut long = good.clone();
    long.push(0);
    ensure!(decode_bundle(&long).is_err(), "trailing bytes accepted");
    Ok("100 round trips bit-exact; bad magic, version and truncation rejected".into())
}

fn trajectory_contracts() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..100 {
        let d = rng.random_range(1..6);
        let turns = rng.random_range(1..7);
        let b = fixtures::random_bundle(&mut rng, d, turns);
        let b = ActivationBundle {
            matrix: b.matrix.iter().map(|v| v.clamp(-1e3, 1e3)).collect(),
            ..b
        };
        for task in [Task::Persuasion, Task::Strategy] {
            let uniform = ProbeModel::zeros(task, d, 0, "acceptance");
            let c = task.num_classes() as f64;
            for t in [
                turn_trajectory(&uniform, &b),
                token_trajectory(&uniform, &b),
            ] {
                let t = t.map_err(|e| e.to_string())?;
                let flat = t.points.iter().all(|p| {
                    p.probs
                        .as_slice()
                        .iter()
                        .all(|&v| (v - 1.0 / c).abs() < 1e-12)
                });
                ensure!(flat, "bundle {i}: zero probe is not uniform");
            }
        }

        let c = 3;
        let w: Vec<f64> = (0..c * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe = ProbeModel::with_params(Task::Strategy, d, w, vec![0.1, 0.0, -0.1])
            .map_err(|e| e.to_string())?;
        let before = turn_trajectory(&probe, &b).map_err(|e| e.to_string())?;
        ensure!(
            before.len() == turns,
            "bundle {i}: {} points for {turns} turns",
            before.len()
        );
        let k = rng.random_range(1..=turns);
        let boundary = b.turn_spans[k - 1].end;
        let mut edited = b.clone();
        for v in &mut edited.matrix[boundary * d..] {
            *v = rng.random_range(-10.0..10.0);
        }
        let after = turn_trajectory(&probe, &edited).map_err(|e| e.to_string())?;
        ensure!(
            before.points[..k] == after.points[..k],
            "bundle {i}: edit after turn {k} changed earlier points"
        );
    }
    Ok("100 bundles: uniform, prefix-causal, one point per turn".into())
}

fn detection_construction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let turns = 10;
    let pops: Vec<_> = (0..200)
        .map(|i| {
            let unpersuaded = i % 2 == 1;
            let n: f64 = if unpersuaded {
                rng.random_range(0.85..1.0)
            } else {
                rng.random_range(0.0..0.15)
            };
            let a: f64 = rng.random_range(0.3..0.7);
            let outcome = if unpersuaded {
                Outcome::Unpersuaded
            } else {
                Outcome::Persuaded
            };
            (
                fixtures::flat_traits(&i.to_string(), turns, [0.5, 0.5, 0.5, a, n]),
                outcome,
            )
        })
        .collect();
    let pop: Vec<_> = pops.iter().map(|(t, o)| (t, *o)).collect();
    for (name, rule) in [
        ("unpersuasion", DetectionRule::unpersuasion()),
        ("persuasion", DetectionRule::persuasion()),
    ] {
        for k in 1..=turns {
            let d = detect(&rule, &pop, k).map_err(|e| e.to_string())?;
            ensure!(
                d.tpr == Some(1.0) && d.fpr == Some(0.0),
                "{name} rule at turn {k}: tpr {:?}, fpr {:?}",
                d.tpr,
                d.fpr
            );
        }
    }
    Ok(format!(
        "200 conversations, {turns} turns, both rules TPR 1 / FPR 0"
    ))
}

fn correlation_oracle() -> Verdict {
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0], 1.0),
        (&[1.0, 2.0, 3.0, 4.0], &[8.0, 6.0, 4.0, 2.0], -1.0),
        // centred vectors at 60 degrees
        (&[1.0, 0.0, -1.0], &[1.0, -1.0, 0.0], 0.5),
    ];
    for (x, y, want) in cases {
        let r = pearson(x, y).ok_or("zero variance")?;
        ensure!(
            (r - want).abs() < 1e-12,
            "pearson({x:?}, {y:?}) = {r}, want {want}"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let a: f64 = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let b: f64 = rng.random_range(-50.0..50.0);
        let r = pearson(&x, &y).ok_or("zero variance")?;
        let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r2 = pearson(&moved, &y).ok_or("zero variance")?;
        worst = worst.max((r2 - a.signum() * r).abs());
        worst = worst.max((r - oracle::pearson_sums(&x, &y)).abs());
    }
    ensure!(worst < 1e-9, "affine invariance off by {worst:e}");
    Ok(format!(
        "1, -1, 0.5 exact; 500 affine maps within {worst:.1e}"
    ))
}

const TRAITS: [&str; 5] = [
    "openness",
    "extraversion",
    "conscientiousness",
    "agreeableness",
    "neuroticism",
];

fn mini() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

fn pprobe(args: &[String]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pprobe"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "pprobe {} exited with {}: {}",
            args.first().map(String::as_str).unwrap_or(""),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn pipeline(root: &Path, jobs: &str) -> Result<(), String> {
    let m = mini();
    let p = |x: &Path| x.display().to_string();
    let inputs = |cmd: &str, out: &Path| -> Vec<String> {
        vec![
            cmd.into(),
            "--transcripts".into(),
            p(&m.join("transcripts.jsonl")),
            "--bundles".into(),
            p(&m.join("bundles")),
            "--layer".into(),
            "1".into(),
            "--jobs".into(),
            jobs.into(),
            "--out".into(),
            p(out),
        ]
    };
    let probes = root.join("probes");
    let mut tasks = vec!["persuasion".to_string(), "strategy".to_string()];
    tasks.extend(TRAITS.iter().map(|t| format!("trait:{t}")));
    for task in &tasks {
        let mut a = inputs("train", &probes);
        a.extend([
            "--task".into(),
            task.clone(),
            "--learning-rate".into(),
            "0.05".into(),
        ]);
        pprobe(&a)?;
    }
    let flag = |name: &str| vec!["--probe".to_string(), p(&probes.join(name))];
    let traits: Vec<String> = TRAITS
        .iter()
        .flat_map(|t| flag(&format!("trait-{t}.probe.json")))
        .collect();

    let mut a = inputs("eval", &root.join("eval"));
    a.extend(flag("persuasion.probe.json"));
    a.extend(flag("strategy.probe.json"));
    a.extend(flag("trait-neuroticism.probe.json"));
    pprobe(&a)?;
    let mut a = inputs("detect", &root.join("detect"));
    a.extend(traits.clone());
    pprobe(&a)?;
    let mut a = inputs("correlate", &root.join("correlate"));
    a.extend(traits);
    a.extend(flag("strategy.probe.json"));
    pprobe(&a)?;
    let mut a = inputs("ablate-report", &root.join("ablate"));
    a.extend(flag("persuasion.probe.json"));
    pprobe(&a)
}

fn read_tree(root: &Path) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                let text = fs::read_to_string(&path).map_err(|e| format!("{rel}: {e}"))?;
                out.insert(rel, text.replace(&root.display().to_string(), "<root>"));
            }
        }
    }
    Ok(out)
}

fn check_csv(
    files: &BTreeMap<String, String>,
    name: &str,
    header: &[&str],
) -> Result<usize, String> {
    let text = files.get(name).ok_or(format!("{name} not written"))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let got: Vec<String> = r
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(str::to_string)
        .collect();
    ensure!(got == header, "{name}: header {got:?}");
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| format!("{name}: {e}"))?;
        ensure!(rec.len() == header.len(), "{name}: ragged row");
        rows += 1;
    }
    ensure!(rows > 0, "{name}: no rows");
    Ok(rows)
}

fn end_to_end() -> Verdict {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path(), "1")?;
    pipeline(b.path(), "4")?;
    let fa = read_tree(a.path())?;
    let fb = read_tree(b.path())?;
    ensure!(fa.keys().eq(fb.keys()), "different files across --jobs");
    let differing: Vec<&String> = fa.keys().filter(|k| fa[*k] != fb[*k]).collect();
    ensure!(
        differing.is_empty(),
        "outputs differ across --jobs: {differing:?}"
    );

    let curve = ["turn", "value", "n"];
    let matrix = [
        "strategy",
        "openness",
        "extraversion",
        "conscientiousness",
        "agreeableness",
        "neuroticism",
    ];
    check_csv(&fa, "eval/persuasion.auroc_curve.csv", &curve)?;
    check_csv(&fa, "eval/trait-neuroticism.trait_mse_curve.csv", &curve)?;
    check_csv(
        &fa,
        "eval/persuasion.trajectories.csv",
        &[
            "conversation_id",
            "task",
            "granularity",
            "index",
            "role",
            "p_unpersuaded",
            "p_persuaded",
            "predicted_class",
        ],
    )?;
    check_csv(
        &fa,
        "eval/strategy.trajectories.csv",
        &[
            "conversation_id",
            "task",
            "granularity",
            "index",
            "role",
            "p_logical",
            "p_emotional",
            "p_credibility",
            "predicted_class",
        ],
    )?;
    check_csv(
        &fa,
        "detect/detection.csv",
        &["turn", "tpr", "fpr", "n_pos", "n_neg"],
    )?;
    check_csv(&fa, "correlate/correlation.csv", &matrix)?;
    check_csv(&fa, "correlate/correlation_n.csv", &matrix)?;
    let ablated = check_csv(
        &fa,
        "ablate/ablation_mini-00.csv",
        &["word_index", "word", "delta_p"],
    )?;
    check_csv(
        &fa,
        "ablate/ablation_mini-01.csv",
        &["word_index", "word", "delta_p"],
    )?;
    for name in fa.keys().filter(|k| k.ends_with(".json")) {
        serde_json::from_str::<serde_json::Value>(&fa[name]).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!(
        "{} files identical across --jobs 1/4; {ablated} ablation rows",
        fa.len()
    ))
}
