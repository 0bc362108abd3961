use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Dataset, ItemId, OutfitId, Split, UserId};

/// How evaluation and training negatives are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NegativeMode {
    /// Category-wise random mixtures of items.
    Standard,
    /// Positive outfits of other users.
    Hard,
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeMode::Standard => "standard",
            NegativeMode::Hard => "hard",
        })
    }
}

impl FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(NegativeMode::Standard),
            "hard" => Ok(NegativeMode::Hard),
            other => Err(Error::Config(format!("unknown negative mode `{other}`"))),
        }
    }
}

/// One uniformly random item per category slot.
///
/// Fixed-size worlds use one slot per category. Variable-size worlds copy the category
/// multiset of a uniformly drawn training positive. Collisions with any user's positives are
/// not filtered.
pub fn sample_negative(dataset: &Dataset, by_category: &[Vec<ItemId>], rng: &mut impl Rng) -> Vec<ItemId> {
    let slots: Vec<usize> = if dataset.config.variable_size {
        let user = rng.random_range(0..dataset.users.len());
        let template = dataset.users[user]
            .train
            .choose(rng)
            .and_then(|&o| dataset.outfits.get(o));
        match template {
            Some(o) => o.items.iter().map(|&i| dataset.items[i].category).collect(),
            None => (0..by_category.len()).collect(),
        }
    } else {
        (0..by_category.len()).collect()
    };
    let mut items = Vec::with_capacity(slots.len());
    for c in slots {
        let pool = &by_category[c];
        // redraw on an in-outfit duplicate when the category allows it
        let mut pick = pool[rng.random_range(0..pool.len())];
        let mut tries = 0;
        while items.contains(&pick) && tries < 8 && pool.len() > 1 {
            pick = pool[rng.random_range(0..pool.len())];
            tries += 1;
        }
        items.push(pick);
    }
    items
}

/// Uniform draw from the union of the other known users' training positives.
pub fn sample_hard_negative(dataset: &Dataset, user: UserId, rng: &mut impl Rng) -> Result<OutfitId> {
    if dataset.users.len() < 2 {
        return Err(Error::Input("hard negatives need at least two users".into()));
    }
    dataset.user(user)?;
    let total: usize = dataset
        .users
        .iter()
        .enumerate()
        .filter(|(u, _)| *u != user)
        .map(|(_, s)| s.train.len())
        .sum();
    if total == 0 {
        return Err(Error::Input(format!("no other user than {user} has training positives")));
    }
    let mut k = rng.random_range(0..total);
    for (u, splits) in dataset.users.iter().enumerate() {
        if u == user {
            continue;
        }
        if k < splits.train.len() {
            return Ok(splits.train[k]);
        }
        k -= splits.train.len();
    }
    unreachable!("index drawn within the union size")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub items: Vec<ItemId>,
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserEvalSet {
    pub user: UserId,
    pub candidates: Vec<Candidate>,
}

impl UserEvalSet {
    pub fn positives(&self) -> usize {
        self.candidates.iter().filter(|c| c.positive).count()
    }

    pub fn negatives(&self) -> usize {
        self.candidates.len() - self.positives()
    }
}

/// All positives of `positives` followed by `ratio` negatives per positive.
pub fn build_eval_set(
    dataset: &Dataset,
    user: UserId,
    positives: &[OutfitId],
    ratio: usize,
    mode: NegativeMode,
    rng: &mut impl Rng,
) -> Result<UserEvalSet> {
    if positives.is_empty() {
        return Err(Error::Input(format!("user {user} has no positives in the requested split")));
    }
    let by_cat = dataset.items_by_category();
    let mut candidates = Vec::with_capacity(positives.len() * (ratio + 1));
    for &o in positives {
        candidates.push(Candidate {
            items: dataset.outfit(o)?.items.clone(),
            positive: true,
        });
    }
    for _ in 0..positives.len() * ratio {
        let items = match mode {
            NegativeMode::Standard => sample_negative(dataset, &by_cat, rng),
            NegativeMode::Hard => {
                // cold users are not in the known-user table, so draw from any known user
                let anchor = if user < dataset.users.len() { user } else { usize::MAX };
                hard_for(dataset, anchor, rng)?
            }
        };
        candidates.push(Candidate { items, positive: false });
    }
    Ok(UserEvalSet { user, candidates })
}

fn hard_for(dataset: &Dataset, user: UserId, rng: &mut impl Rng) -> Result<Vec<ItemId>> {
    let outfit = if user == usize::MAX {
        let u = rng.random_range(0..dataset.users.len());
        *dataset.users[u]
            .train
            .choose(rng)
            .ok_or_else(|| Error::Input(format!("user {u} has no training positives")))?
    } else {
        sample_hard_negative(dataset, user, rng)?
    };
    Ok(dataset.outfit(outfit)?.items.clone())
}

/// Per-user evaluation sets for one split of every known user, reproducible from `seed`.
///
/// Users with no positives in the split are skipped with a warning.
pub fn build_eval_sets(
    dataset: &Dataset,
    split: Split,
    ratio: usize,
    mode: NegativeMode,
    seed: u64,
) -> Result<Vec<UserEvalSet>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::with_capacity(dataset.users.len());
    for (user, splits) in dataset.users.iter().enumerate() {
        let positives = splits.get(split);
        if positives.is_empty() {
            log::warn!("user {user} has no {split} positives; skipped");
            continue;
        }
        sets.push(build_eval_set(dataset, user, positives, ratio, mode, &mut rng)?);
    }
    if sets.is_empty() {
        return Err(Error::Input(format!("split {split} is empty for every user")));
    }
    Ok(sets)
}
