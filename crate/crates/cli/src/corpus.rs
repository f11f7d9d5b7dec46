// SPDX-License-Identifier: MIT OR Apache-2.0

//! Loading transcripts, probes and bundle directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::warn;
use persuasion_probe::{
    load_probe, parse_transcripts, read_bundle, ActivationBundle, Conversation, ProbeModel,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::failure::{config_error, data_error, Classify, RunResult};

/// A bundle file name split into its parts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BundleName {
    pub conversation_id: String,
    pub layer: u32,
    pub ablated_word: Option<usize>,
}

fn digits(s: &str) -> Option<&str> {
    (!s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())).then_some(s)
}

impl BundleName {
    /// Parses `<id>.L<layer>[.abl<word>].ppab`; the id may itself contain dots.
    pub fn parse(file_name: &str) -> Option<Self> {
        let stem = file_name.strip_suffix(".ppab")?;
        let (stem, ablated_word) = match stem.rsplit_once('.') {
            Some((head, tail)) if tail.starts_with("abl") => {
                (head, Some(digits(&tail[3..])?.parse().ok()?))
            }
            _ => (stem, None),
        };
        let (id, layer) = stem.rsplit_once('.')?;
        let layer = digits(layer.strip_prefix('L')?)?.parse().ok()?;
        if id.is_empty() {
            return None;
        }
        Some(BundleName {
            conversation_id: id.to_string(),
            layer,
            ablated_word,
        })
    }

    pub fn file_name(&self) -> String {
        match self.ablated_word {
            Some(w) => format!("{}.L{}.abl{w}.ppab", self.conversation_id, self.layer),
            None => format!("{}.L{}.ppab", self.conversation_id, self.layer),
        }
    }
}

/// Bundle files found in a directory, sorted by name.
#[derive(Debug, Clone)]
pub struct BundleIndex {
    pub dir: PathBuf,
    pub names: Vec<BundleName>,
}

impl BundleIndex {
    pub fn scan(dir: &Path) -> RunResult<Self> {
        if !dir.is_dir() {
            return Err(config_error(format!(
                "bundle directory {} does not exist",
                dir.display()
            )));
        }
        let mut names = Vec::new();
        for entry in fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))
            .data()?
        {
            let entry = entry.data()?;
            let file_name = entry.file_name();
            let Some(file_name) = file_name.to_str() else {
                continue;
            };
            if !file_name.ends_with(".ppab") {
                continue;
            }
            match BundleName::parse(file_name) {
                Some(n) => names.push(n),
                None => warn!("ignoring {file_name}: not <id>.L<layer>[.abl<word>].ppab"),
            }
        }
        names.sort();
        Ok(BundleIndex {
            dir: dir.to_path_buf(),
            names,
        })
    }

    pub fn layers(&self) -> BTreeSet<u32> {
        self.names.iter().map(|n| n.layer).collect()
    }

    /// Picks the layer to use: the requested one, the only one present, or
    /// the one all `probes` were trained at.
    pub fn choose_layer(&self, requested: Option<u32>, probes: &[ProbeModel]) -> RunResult<u32> {
        let layers = self.layers();
        if layers.is_empty() {
            return Err(config_error(format!(
                "no .ppab bundles in {}",
                self.dir.display()
            )));
        }
        if let Some(l) = requested {
            return if layers.contains(&l) {
                Ok(l)
            } else {
                Err(config_error(format!(
                    "no bundles at layer {l} in {} (have {layers:?})",
                    self.dir.display()
                )))
            };
        }
        if layers.len() == 1 {
            return Ok(*layers.iter().next().expect("one layer"));
        }
        let probe_layers: BTreeSet<u32> = probes.iter().map(|p| p.layer_index).collect();
        match probe_layers.iter().collect::<Vec<_>>().as_slice() {
            [l] if layers.contains(l) => Ok(**l),
            _ => Err(config_error(format!(
                "bundles span layers {layers:?}; pass --layer"
            ))),
        }
    }

    /// Main (non-ablated) bundle names at `layer`.
    pub fn main_at(&self, layer: u32) -> Vec<&BundleName> {
        self.names
            .iter()
            .filter(|n| n.layer == layer && n.ablated_word.is_none())
            .collect()
    }

    /// Ablation variants at `layer`, by conversation, ordered by word.
    pub fn ablations_at(&self, layer: u32) -> BTreeMap<&str, Vec<&BundleName>> {
        let mut out: BTreeMap<&str, Vec<&BundleName>> = BTreeMap::new();
        for n in &self.names {
            if n.layer == layer && n.ablated_word.is_some() {
                out.entry(n.conversation_id.as_str()).or_default().push(n);
            }
        }
        for v in out.values_mut() {
            v.sort_by_key(|n| n.ablated_word);
        }
        out
    }

    /// Reads and checks the named bundles in parallel, keeping their order.
    pub fn load(&self, names: &[&BundleName]) -> RunResult<Vec<ActivationBundle>> {
        let results: Vec<RunResult<ActivationBundle>> = names
            .par_iter()
            .map(|n| load_bundle(&self.dir.join(n.file_name()), n))
            .collect();
        results.into_iter().collect()
    }
}

fn load_bundle(path: &Path, name: &BundleName) -> RunResult<ActivationBundle> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .data()?;
    let bundle = read_bundle(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .data()?;
    if bundle.conversation_id != name.conversation_id || bundle.layer != name.layer {
        return Err(data_error(format!(
            "{} holds conversation `{}` at layer {}",
            path.display(),
            bundle.conversation_id,
            bundle.layer
        )));
    }
    Ok(bundle)
}

pub fn load_transcripts(path: &Path) -> RunResult<Vec<Conversation>> {
    if !path.is_file() {
        return Err(config_error(format!(
            "transcript file {} does not exist",
            path.display()
        )));
    }
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .data()?;
    parse_transcripts(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
        .data()
}

pub fn load_probes(paths: &[PathBuf]) -> RunResult<Vec<ProbeModel>> {
    paths
        .iter()
        .map(|p| {
            if !p.is_file() {
                return Err(config_error(format!(
                    "probe file {} does not exist",
                    p.display()
                )));
            }
            let bytes = fs::read(p)
                .with_context(|| format!("reading {}", p.display()))
                .data()?;
            load_probe(&bytes)
                .with_context(|| format!("loading probe {}", p.display()))
                .data()
        })
        .collect()
}

/// Pairs each bundle with its conversation, dropping (with a warning)
/// bundles whose conversation is not in the corpus.
pub fn pair(
    bundles: Vec<ActivationBundle>,
    conversations: &[Conversation],
) -> Vec<(ActivationBundle, &Conversation)> {
    let by_id: BTreeMap<&str, &Conversation> =
        conversations.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut out = Vec::with_capacity(bundles.len());
    for b in bundles {
        match by_id.get(b.conversation_id.as_str()) {
            Some(c) => out.push((b, *c)),
            None => warn!(
                "bundle for `{}` has no transcript; skipped",
                b.conversation_id
            ),
        }
    }
    let covered: BTreeSet<&str> = out
        .iter()
        .map(|(b, _)| b.conversation_id.as_str())
        .collect();
    let missing = conversations
        .iter()
        .filter(|c| !covered.contains(c.id.as_str()))
        .count();
    if missing > 0 {
        warn!("{missing} conversations have no bundle at this layer");
    }
    out
}

/// Seeded conversation-level split: sorted ids are shuffled and the last
/// `holdout` fraction (rounded) is held out.
pub fn held_out_ids(ids: &[&str], holdout: f64, seed: u64) -> BTreeSet<String> {
    let mut ids: Vec<&str> = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((ids.len() as f64) * holdout).round() as usize;
    ids[ids.len() - n_test.min(ids.len())..]
        .iter()
        .map(|s| s.to_string())
        .collect()
}
