use std::collections::HashMap;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coldstart::{ColdProfile, ColdScorer, ColdStartConfig};
use crate::datagen::{build_eval_set, build_eval_sets, Dataset, NegativeMode, OutfitId, Split, UserEvalSet};
use crate::diffcore::cosine;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Evaluation, RankedList};
use crate::Model;

/// FNV-1a over the bit patterns of every parameter, in store order.
pub fn model_hash(model: &Model) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in model.store.iter() {
        for v in p.value.data() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

fn ranked(scores: Vec<f64>, set: &UserEvalSet) -> Result<RankedList> {
    RankedList::new(scores, set.candidates.iter().map(|c| c.positive).collect())
}

/// Scores every candidate of every set for its own user.
pub fn score_eval_sets(model: &Model, dataset: &Dataset, sets: &[UserEvalSet]) -> Result<Vec<(usize, RankedList)>> {
    sets.iter()
        .map(|set| {
            let u = model.user_embedding(set.user)?;
            let scores = set
                .candidates
                .iter()
                .map(|c| Ok(cosine(u, &model.encode_outfit(&dataset.features(&c.items)?)?)? as f64))
                .collect::<Result<Vec<_>>>()?;
            Ok((set.user, ranked(scores, set)?))
        })
        .collect()
}

pub fn evaluate_sets(model: &Model, dataset: &Dataset, sets: &[UserEvalSet]) -> Result<Evaluation> {
    evaluate(&score_eval_sets(model, dataset, sets)?)
}

/// Builds `1:ratio` sets for `split` in `mode` and evaluates `model` on them.
pub fn evaluate_model(
    model: &Model,
    dataset: &Dataset,
    split: Split,
    mode: NegativeMode,
    ratio: usize,
    seed: u64,
) -> Result<Evaluation> {
    if split == Split::Train {
        log::warn!("evaluating on the training split");
    }
    let sets = build_eval_sets(dataset, split, ratio, mode, seed)?;
    evaluate_sets(model, dataset, &sets)
}

#[derive(Clone, Debug)]
pub struct ColdStartSettings {
    /// Interacted outfits kept per cold user in each repetition.
    pub k: usize,
    pub cold: ColdStartConfig,
    pub repetitions: usize,
    pub seed: u64,
    pub ratio: usize,
    pub mode: NegativeMode,
}

impl Default for ColdStartSettings {
    fn default() -> Self {
        ColdStartSettings {
            k: 1,
            cold: ColdStartConfig::default(),
            repetitions: 10,
            seed: 0,
            ratio: 10,
            mode: NegativeMode::Standard,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColdStartOutcome {
    pub per_rep_auc: Vec<f64>,
    pub per_rep_ndcg: Vec<f64>,
    pub mean_auc: f64,
    pub mean_ndcg: f64,
    pub min_neighbors: usize,
    pub max_neighbors: usize,
}

/// Scores each cold user's test positives against sampled negatives through its neighbourhood.
///
/// Evaluation sets are drawn once from `seed`; repetitions differ only in which `k` profile
/// outfits are kept, so two strategies run with the same settings see the same subsamples.
pub fn coldstart_eval(
    model: &Model,
    dataset: &Dataset,
    profiles: &[ColdProfile],
    settings: &ColdStartSettings,
) -> Result<ColdStartOutcome> {
    settings.cold.validate()?;
    if settings.k == 0 || settings.repetitions == 0 {
        return Err(Error::Config("k and repetitions must be at least 1".into()));
    }
    if profiles.is_empty() {
        return Err(Error::Input("no cold profiles".into()));
    }
    let mut encoded: HashMap<OutfitId, Vec<f32>> = HashMap::new();
    let mut encode = |o: OutfitId| -> Result<Vec<f32>> {
        if let Some(v) = encoded.get(&o) {
            return Ok(v.clone());
        }
        let v = model.encode_outfit(&dataset.outfit_features(o)?)?;
        encoded.insert(o, v.clone());
        Ok(v)
    };

    let mut set_rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut users = Vec::with_capacity(profiles.len());
    for p in profiles {
        if p.outfits.is_empty() {
            return Err(Error::Input(format!("cold user {} has an empty profile", p.user)));
        }
        let cold = dataset.cold_user(p.user)?;
        let set = build_eval_set(dataset, p.user, &cold.test, settings.ratio, settings.mode, &mut set_rng)?;
        let cands = set
            .candidates
            .iter()
            .map(|c| model.encode_outfit(&dataset.features(&c.items)?))
            .collect::<Result<Vec<_>>>()?;
        let profile = p.outfits.iter().map(|&o| encode(o)).collect::<Result<Vec<_>>>()?;
        if profile.len() < settings.k {
            log::warn!(
                "cold user {} has {} profile outfits, fewer than k = {}; using all",
                p.user,
                profile.len(),
                settings.k
            );
        }
        users.push((set, cands, profile));
    }

    let mut out = ColdStartOutcome {
        per_rep_auc: Vec::new(),
        per_rep_ndcg: Vec::new(),
        mean_auc: 0.0,
        mean_ndcg: 0.0,
        min_neighbors: usize::MAX,
        max_neighbors: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5eed_c01d);
    for _ in 0..settings.repetitions {
        let mut lists = Vec::with_capacity(users.len());
        for (set, cands, profile) in &users {
            let kept: Vec<Vec<f32>> = if profile.len() <= settings.k {
                profile.clone()
            } else {
                profile.choose_multiple(&mut rng, settings.k).cloned().collect()
            };
            let scorer = ColdScorer::new(model, &kept, &settings.cold)?;
            if scorer.neighbors.is_empty() {
                return Err(Error::Degenerate(format!("cold user {} has an empty neighbourhood", set.user)));
            }
            out.min_neighbors = out.min_neighbors.min(scorer.neighbors.len());
            out.max_neighbors = out.max_neighbors.max(scorer.neighbors.len());
            let scores = cands.iter().map(|c| scorer.score_encoded(c)).collect::<Result<Vec<_>>>()?;
            lists.push((set.user, ranked(scores, set)?));
        }
        let e = evaluate(&lists)?;
        out.per_rep_auc.push(e.mean_auc);
        out.per_rep_ndcg.push(e.mean_ndcg);
    }
    let n = settings.repetitions as f64;
    out.mean_auc = out.per_rep_auc.iter().sum::<f64>() / n;
    out.mean_ndcg = out.per_rep_ndcg.iter().sum::<f64>() / n;
    Ok(out)
}

/// Writes `user <id> v…` rows for every known user, then `outfit <id> <owners> v…` rows for
/// every dataset outfit. `<owners>` lists the known users holding it as a positive, comma
/// separated, or `-`.
pub fn export_embeddings(model: &Model, dataset: &Dataset, w: &mut impl Write) -> Result<usize> {
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); dataset.outfits.len()];
    for (u, s) in dataset.users.iter().enumerate() {
        for split in Split::ALL {
            for &o in s.get(split) {
                if let Some(list) = owners.get_mut(o) {
                    list.push(u);
                }
            }
        }
    }
    let fmt_vec = |v: &[f32]| v.iter().map(|x| format!("{x:.8e}")).collect::<Vec<_>>().join(" ");
    let mut rows = 0;
    for u in 0..model.user_count() {
        writeln!(w, "user {u} {}", fmt_vec(model.user_embedding(u)?))?;
        rows += 1;
    }
    for (o, list) in owners.iter_mut().enumerate() {
        list.sort_unstable();
        list.dedup();
        let labels = if list.is_empty() {
            "-".to_string()
        } else {
            list.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        let v = model.encode_outfit(&dataset.outfit_features(o)?)?;
        writeln!(w, "outfit {o} {labels} {}", fmt_vec(&v))?;
        rows += 1;
    }
    Ok(rows)
}
