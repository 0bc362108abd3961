//! Outfit augmentations for the contrastive objective: erase one item, or replace one item with
//! a same-category neighbour found through autoencoder latents.

mod autoencoder;
mod index;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use autoencoder::{train_autoencoder, Autoencoder, AutoencoderConfig, AutoencoderReport};
pub use index::{read_index_dump, write_index_dump, SimilarityIndex, INDEX_DUMP_VERSION};

use crate::datagen::ItemId;
use crate::error::{Error, Result};

pub const DEFAULT_REPLACE_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentationKind {
    Identity,
    Erase,
    Replace,
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AugmentationKind::Identity => "identity",
            AugmentationKind::Erase => "erase",
            AugmentationKind::Replace => "replace",
        })
    }
}

impl FromStr for AugmentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(AugmentationKind::Identity),
            "erase" => Ok(AugmentationKind::Erase),
            "replace" => Ok(AugmentationKind::Replace),
            other => Err(Error::Config(format!("unknown augmentation `{other}`"))),
        }
    }
}

/// The two augmentations applied to every outfit; fixed for a whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AugmentationPair(AugmentationKind, AugmentationKind);

impl AugmentationPair {
    pub fn new(first: AugmentationKind, second: AugmentationKind) -> Result<Self> {
        if first == AugmentationKind::Identity && second == AugmentationKind::Identity {
            return Err(Error::Config("the augmentation pair (identity, identity) gives identical views".into()));
        }
        Ok(AugmentationPair(first, second))
    }

    pub fn first(self) -> AugmentationKind {
        self.0
    }

    pub fn second(self) -> AugmentationKind {
        self.1
    }

    pub fn needs_index(self) -> bool {
        self.0 == AugmentationKind::Replace || self.1 == AugmentationKind::Replace
    }

    /// Every admissible pair, in a fixed order.
    pub fn all() -> Vec<AugmentationPair> {
        use AugmentationKind::*;
        let kinds = [Identity, Erase, Replace];
        let mut out = Vec::new();
        for (i, &a) in kinds.iter().enumerate() {
            for &b in &kinds[i..] {
                if let Ok(p) = AugmentationPair::new(a, b) {
                    out.push(p);
                }
            }
        }
        out
    }
}

impl Default for AugmentationPair {
    fn default() -> Self {
        AugmentationPair(AugmentationKind::Erase, AugmentationKind::Replace)
    }
}

impl fmt::Display for AugmentationPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

impl FromStr for AugmentationPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("augmentation pair `{s}` should look like `erase,replace`")))?;
        AugmentationPair::new(a.trim().parse()?, b.trim().parse()?)
    }
}

/// Removes the item at `position`.
pub fn erase_at(outfit: &[ItemId], position: usize) -> Result<Vec<ItemId>> {
    if outfit.len() < 2 {
        return Err(Error::Inapplicable("cannot erase from an outfit of fewer than two items".into()));
    }
    if position >= outfit.len() {
        return Err(Error::Input(format!("position {position} outside outfit of {}", outfit.len())));
    }
    let mut out = outfit.to_vec();
    out.remove(position);
    Ok(out)
}

/// Removes one uniformly chosen item.
pub fn erase(outfit: &[ItemId], rng: &mut impl Rng) -> Result<Vec<ItemId>> {
    if outfit.len() < 2 {
        return Err(Error::Inapplicable("cannot erase from an outfit of fewer than two items".into()));
    }
    erase_at(outfit, rng.random_range(0..outfit.len()))
}

/// Swaps the item at `position` for one drawn uniformly from its `k` nearest neighbours.
pub fn replace_at(
    outfit: &[ItemId],
    position: usize,
    index: &SimilarityIndex,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ItemId>> {
    let item = *outfit
        .get(position)
        .ok_or_else(|| Error::Input(format!("position {position} outside outfit of {}", outfit.len())))?;
    let neighbors = index.similar_items(item, k.max(1))?;
    if neighbors.is_empty() {
        return Err(Error::Inapplicable(format!("item {item} has no other item in its category")));
    }
    let mut out = outfit.to_vec();
    out[position] = neighbors[rng.random_range(0..neighbors.len())];
    Ok(out)
}

pub fn replace(outfit: &[ItemId], index: &SimilarityIndex, rng: &mut impl Rng, k: usize) -> Result<Vec<ItemId>> {
    if outfit.is_empty() {
        return Err(Error::Input("empty outfit".into()));
    }
    let position = rng.random_range(0..outfit.len());
    replace_at(outfit, position, index, k, rng)
}

fn apply_at(
    kind: AugmentationKind,
    outfit: &[ItemId],
    position: usize,
    index: Option<&SimilarityIndex>,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ItemId>> {
    match kind {
        AugmentationKind::Identity => Ok(outfit.to_vec()),
        AugmentationKind::Erase => erase_at(outfit, position),
        AugmentationKind::Replace => {
            let index = index.ok_or_else(|| Error::Config("replace needs a similarity index".into()))?;
            replace_at(outfit, position, index, k, rng)
        }
    }
}

/// Two views of `outfit`. When both kinds match, they alter different positions.
///
/// Outfits too small for the requested pair fall back to the identity for the first view, and
/// an augmentation that cannot apply at all degrades to the identity with a warning.
pub fn make_views(
    outfit: &[ItemId],
    pair: AugmentationPair,
    index: Option<&SimilarityIndex>,
    k: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<ItemId>, Vec<ItemId>)> {
    if outfit.is_empty() {
        return Err(Error::Input("empty outfit".into()));
    }
    let (mut a, b) = (pair.first(), pair.second());
    let n = outfit.len();
    if n < 2 && a != AugmentationKind::Identity {
        log::warn!("outfit of size {n} too small for ({pair}); first view falls back to identity");
        a = AugmentationKind::Identity;
    }
    let p1 = rng.random_range(0..n);
    let mut p2 = rng.random_range(0..n);
    if a == b && a != AugmentationKind::Identity {
        while p2 == p1 {
            p2 = rng.random_range(0..n);
        }
    }
    let view = |kind, position, rng: &mut _| match apply_at(kind, outfit, position, index, k, rng) {
        Err(Error::Inapplicable(msg)) => {
            log::warn!("{kind} not applicable ({msg}); using identity");
            Ok(outfit.to_vec())
        }
        other => other,
    };
    let v1 = view(a, p1, rng)?;
    let v2 = view(b, p2, rng)?;
    Ok((v1, v2))
}

#[cfg(test)]
mod tests;
