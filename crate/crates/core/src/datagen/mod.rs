//! Synthetic outfit world with planted user preferences.
//!
//! Items are category prototypes plus a style component plus noise. Every user owns a hidden
//! unit style direction; positive outfits are composed per category by sampling items with
//! probability proportional to `exp(affinity / temperature)`. Each user's item pool is
//! partitioned across splits before composing outfits, so train and test never share items
//! for a user.

mod audit;
mod io;
mod sampling;
mod world;

use std::fmt;
use std::str::FromStr;

pub use audit::{audit, AuditReport};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_VERSION};
pub use sampling::{
    build_eval_set, build_eval_sets, sample_hard_negative, sample_negative, Candidate, NegativeMode,
    UserEvalSet,
};
pub use world::generate_world;

use crate::error::{Error, Result};

pub type ItemId = usize;
pub type OutfitId = usize;
pub type UserId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub category: usize,
    pub features: Vec<f32>,
}

/// Stored item order carries no meaning; the encoder treats an outfit as a set.
#[derive(Clone, Debug, PartialEq)]
pub struct Outfit {
    pub id: OutfitId,
    pub items: Vec<ItemId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    ValTeacher,
    ValStudent,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::ValTeacher, Split::ValStudent, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValTeacher => "val_teacher",
            Split::ValStudent => "val_student",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split `{s}`")))
    }
}

/// Positive outfit ids of one known user, by split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UserSplits {
    pub train: Vec<OutfitId>,
    pub val_teacher: Vec<OutfitId>,
    pub val_student: Vec<OutfitId>,
    pub test: Vec<OutfitId>,
}

impl UserSplits {
    pub fn get(&self, split: Split) -> &[OutfitId] {
        match split {
            Split::Train => &self.train,
            Split::ValTeacher => &self.val_teacher,
            Split::ValStudent => &self.val_student,
            Split::Test => &self.test,
        }
    }

    pub(crate) fn get_mut(&mut self, split: Split) -> &mut Vec<OutfitId> {
        match split {
            Split::Train => &mut self.train,
            Split::ValTeacher => &mut self.val_teacher,
            Split::ValStudent => &mut self.val_student,
            Split::Test => &mut self.test,
        }
    }
}

/// A user held out from training: a pool of interacted outfits and held-out test positives.
#[derive(Clone, Debug, PartialEq)]
pub struct ColdUser {
    pub id: UserId,
    pub profile: Vec<OutfitId>,
    pub test: Vec<OutfitId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub users: usize,
    pub cold_users: usize,
    pub categories: Vec<String>,
    pub items_per_category: usize,
    pub d_in: usize,
    pub style_dim: usize,
    pub noise: f64,
    pub prototype_scale: f64,
    pub positives_per_user: usize,
    pub cold_profile_size: usize,
    pub preference_temperature: f64,
    pub variable_size: bool,
    pub min_size: usize,
    pub max_size: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            users: 50,
            cold_users: 20,
            categories: vec!["top".into(), "bottom".into(), "shoes".into()],
            items_per_category: 200,
            d_in: 32,
            style_dim: 8,
            noise: 0.3,
            prototype_scale: 2.0,
            positives_per_user: 60,
            cold_profile_size: 10,
            preference_temperature: 0.5,
            variable_size: false,
            min_size: 2,
            max_size: 5,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("users", self.users),
            ("items_per_category", self.items_per_category),
            ("d_in", self.d_in),
            ("style_dim", self.style_dim),
            ("positives_per_user", self.positives_per_user),
            ("categories", self.categories.len()),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.style_dim + 1 > self.d_in {
            return Err(Error::Config(format!(
                "style_dim {} leaves no room for category prototypes in d_in {}",
                self.style_dim, self.d_in
            )));
        }
        if self.cold_users > 0 && self.cold_profile_size == 0 {
            return Err(Error::Config("cold users need a nonempty profile".into()));
        }
        if !(self.preference_temperature > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::Config("temperature must be positive and noise nonnegative".into()));
        }
        if self.variable_size && (self.min_size == 0 || self.min_size > self.max_size) {
            return Err(Error::Config(format!(
                "invalid outfit size range {}..={}",
                self.min_size, self.max_size
            )));
        }
        if self.categories.iter().any(|c| c.is_empty() || c.contains(char::is_whitespace)) {
            return Err(Error::Config("category names must be nonempty without whitespace".into()));
        }
        Ok(())
    }

    /// Positive counts per split for one user: train, val_teacher, val_student, test.
    pub fn split_counts(&self) -> [usize; 4] {
        split_counts(self.positives_per_user)
    }
}

/// 9 : 2 : 2 split of `total`, with validation halved (teacher half rounded up).
pub fn split_counts(total: usize) -> [usize; 4] {
    let train = ((total as f64) * 9.0 / 13.0).round() as usize;
    let test = ((total as f64) * 2.0 / 13.0).round() as usize;
    let test = test.min(total - train);
    let val = total - train - test;
    [train, val.div_ceil(2), val / 2, test]
}

/// Hidden ground-truth preference directions; never read by models.
#[derive(Clone, Debug, PartialEq)]
pub struct Oracle {
    /// Indexed by global user id (known users first, then cold users).
    pub styles: Vec<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: WorldConfig,
    pub items: Vec<Item>,
    pub outfits: Vec<Outfit>,
    /// Known users, ids `0..users.len()`.
    pub users: Vec<UserSplits>,
    /// Cold users, ids continuing after the known users.
    pub cold_users: Vec<ColdUser>,
    pub oracle: Option<Oracle>,
}

impl Dataset {
    pub fn categories(&self) -> &[String] {
        &self.config.categories
    }

    pub fn d_in(&self) -> usize {
        self.config.d_in
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn outfit(&self, id: OutfitId) -> Result<&Outfit> {
        self.outfits
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("outfit {id} not in dataset")))
    }

    pub fn item(&self, id: ItemId) -> Result<&Item> {
        self.items
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("item {id} not in dataset")))
    }

    pub fn user(&self, id: UserId) -> Result<&UserSplits> {
        self.users
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("user {id} is not a known user")))
    }

    pub fn cold_user(&self, id: UserId) -> Result<&ColdUser> {
        self.cold_users
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Lookup(format!("user {id} is not a cold user")))
    }

    /// Feature rows for a list of item ids.
    pub fn features(&self, items: &[ItemId]) -> Result<Vec<&[f32]>> {
        items
            .iter()
            .map(|&i| self.item(i).map(|it| it.features.as_slice()))
            .collect()
    }

    pub fn outfit_features(&self, id: OutfitId) -> Result<Vec<&[f32]>> {
        self.features(&self.outfit(id)?.items)
    }

    /// Items of each category.
    pub fn items_by_category(&self) -> Vec<Vec<ItemId>> {
        let mut by_cat = vec![Vec::new(); self.categories().len()];
        for it in &self.items {
            by_cat[it.category].push(it.id);
        }
        by_cat
    }

    pub fn oracle_style(&self, user: UserId) -> Option<&[f32]> {
        self.oracle.as_ref()?.styles.get(user).map(Vec::as_slice)
    }

    /// Cosine between the user's hidden style and the mean feature of `items`.
    pub fn oracle_score(&self, user: UserId, items: &[ItemId]) -> Result<f64> {
        let style = self
            .oracle_style(user)
            .ok_or_else(|| Error::Lookup(format!("no oracle style for user {user}")))?;
        let mut mean = vec![0.0f64; self.d_in()];
        for &i in items {
            for (m, &v) in mean.iter_mut().zip(&self.item(i)?.features) {
                *m += v as f64;
            }
        }
        let n = items.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let s64: Vec<f64> = style.iter().map(|&v| v as f64).collect();
        crate::diffcore::cosine(&s64, &mean)
    }
}
