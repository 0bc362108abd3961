use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::{split_counts, ColdUser, Dataset, Item, ItemId, Oracle, Outfit, Split, UserSplits, WorldConfig};

// Pool proportions per split: train, validation (shared by both halves), test.
const POOL_WEIGHTS: [f64; 3] = [9.0, 2.0, 2.0];
const MAX_ATTEMPTS_PER_OUTFIT: usize = 200;

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Random orthonormal basis of `R^d` (columns returned as rows here).
fn orthonormal_basis(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v = gaussian(rng, d);
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

struct Generator<'a> {
    cfg: &'a WorldConfig,
    rng: ChaCha8Rng,
    items: Vec<Item>,
    outfits: Vec<Outfit>,
}

impl Generator<'_> {
    fn affinity(&self, style: &[f64], item: ItemId) -> f64 {
        style
            .iter()
            .zip(&self.items[item].features)
            .map(|(s, &f)| s * f as f64)
            .sum()
    }

    /// Category slots of one outfit.
    fn slot_categories(&mut self) -> Vec<usize> {
        let c = self.cfg.categories.len();
        if !self.cfg.variable_size {
            return (0..c).collect();
        }
        let size = self.rng.random_range(self.cfg.min_size..=self.cfg.max_size);
        let mut cats: Vec<usize> = (0..c).collect();
        if size < c {
            cats.shuffle(&mut self.rng);
            cats.truncate(size);
            cats.sort_unstable();
        } else {
            for _ in c..size {
                cats.push(self.rng.random_range(0..c));
            }
        }
        cats
    }

    fn sample_from_pool(&mut self, style: &[f64], pool: &[ItemId], exclude: &[ItemId]) -> Option<ItemId> {
        let candidates: Vec<ItemId> = pool.iter().copied().filter(|i| !exclude.contains(i)).collect();
        if candidates.is_empty() {
            return None;
        }
        let t = self.cfg.preference_temperature;
        let logits: Vec<f64> = candidates.iter().map(|&i| self.affinity(style, i) / t).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.random::<f64>() * total;
        for (&i, w) in candidates.iter().zip(&weights) {
            if u < *w {
                return Some(i);
            }
            u -= w;
        }
        candidates.last().copied()
    }

    /// Composes `count` distinct positive outfits from per-category pools.
    fn compose(&mut self, style: &[f64], pools: &[Vec<ItemId>], count: usize) -> Result<Vec<usize>> {
        let mut seen: HashSet<Vec<ItemId>> = HashSet::new();
        let mut ids = Vec::with_capacity(count);
        let mut attempts = 0;
        while ids.len() < count {
            attempts += 1;
            if attempts > MAX_ATTEMPTS_PER_OUTFIT * count.max(1) {
                return Err(Error::Config(format!(
                    "could not compose {count} distinct positives; increase items_per_category or the preference temperature"
                )));
            }
            let cats = self.slot_categories();
            let mut items = Vec::with_capacity(cats.len());
            for &c in &cats {
                match self.sample_from_pool(style, &pools[c], &items) {
                    Some(i) => items.push(i),
                    None => break,
                }
            }
            if items.len() != cats.len() {
                continue;
            }
            let mut key = items.clone();
            key.sort_unstable();
            if !seen.insert(key) {
                continue;
            }
            let id = self.outfits.len();
            self.outfits.push(Outfit { id, items });
            ids.push(id);
        }
        Ok(ids)
    }

    /// Partitions each category into train / validation / test pools for one user.
    fn partition_pools(&mut self, by_cat: &[Vec<ItemId>]) -> [Vec<Vec<ItemId>>; 3] {
        let total: f64 = POOL_WEIGHTS.iter().sum();
        let mut pools: [Vec<Vec<ItemId>>; 3] = Default::default();
        for items in by_cat {
            let mut shuffled = items.clone();
            shuffled.shuffle(&mut self.rng);
            let n = shuffled.len();
            let n_val = ((n as f64) * POOL_WEIGHTS[1] / total).round() as usize;
            let n_test = ((n as f64) * POOL_WEIGHTS[2] / total).round() as usize;
            let n_train = n - n_val - n_test;
            pools[0].push(shuffled[..n_train].to_vec());
            pools[1].push(shuffled[n_train..n_train + n_val].to_vec());
            pools[2].push(shuffled[n_train + n_val..].to_vec());
        }
        pools
    }

    fn check_feasible(&self, pools: &[Vec<ItemId>], count: usize, what: &str) -> Result<()> {
        let distinct: f64 = pools.iter().map(|p| p.len() as f64).product();
        if !self.cfg.variable_size && (count as f64) > distinct {
            return Err(Error::Config(format!(
                "{count} {what} positives requested but only {distinct} distinct outfits exist"
            )));
        }
        if pools.iter().any(Vec::is_empty) && count > 0 {
            return Err(Error::Config(format!(
                "a {what} item pool is empty; increase items_per_category"
            )));
        }
        Ok(())
    }
}

/// Generates a world; identical configs (including the seed) give identical datasets.
pub fn generate_world(cfg: &WorldConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        items: Vec::new(),
        outfits: Vec::new(),
    };
    let d = cfg.d_in;
    let basis = orthonormal_basis(&mut g.rng, d);
    let (style_dirs, proto_dirs) = basis.split_at(cfg.style_dim);

    let prototypes: Vec<Vec<f64>> = (0..cfg.categories.len())
        .map(|_| {
            let mut coef = gaussian(&mut g.rng, proto_dirs.len());
            normalize(&mut coef);
            let mut p = vec![0.0; d];
            for (c, dir) in coef.iter().zip(proto_dirs) {
                p.iter_mut().zip(dir).for_each(|(x, y)| *x += cfg.prototype_scale * c * y);
            }
            p
        })
        .collect();

    for (cat, proto) in prototypes.iter().enumerate() {
        for _ in 0..cfg.items_per_category {
            let style = gaussian(&mut g.rng, cfg.style_dim);
            let noise = gaussian(&mut g.rng, d);
            let mut f = proto.clone();
            for (s, dir) in style.iter().zip(style_dirs) {
                f.iter_mut().zip(dir).for_each(|(x, y)| *x += s * y);
            }
            f.iter_mut().zip(&noise).for_each(|(x, n)| *x += cfg.noise * n);
            let id = g.items.len();
            g.items.push(Item {
                id,
                category: cat,
                features: f.iter().map(|&v| v as f32).collect(),
            });
        }
    }

    let total_users = cfg.users + cfg.cold_users;
    let styles: Vec<Vec<f64>> = (0..total_users)
        .map(|_| {
            let mut coef = gaussian(&mut g.rng, cfg.style_dim);
            normalize(&mut coef);
            let mut z = vec![0.0; d];
            for (c, dir) in coef.iter().zip(style_dirs) {
                z.iter_mut().zip(dir).for_each(|(x, y)| *x += c * y);
            }
            z
        })
        .collect();
    // stored at f32 precision so the oracle matches what a reloaded dataset sees
    let styles: Vec<Vec<f64>> = styles
        .iter()
        .map(|z| z.iter().map(|&v| v as f32 as f64).collect())
        .collect();

    let mut by_cat = vec![Vec::new(); cfg.categories.len()];
    for it in &g.items {
        by_cat[it.category].push(it.id);
    }

    let [n_train, n_vt, n_vs, n_test] = split_counts(cfg.positives_per_user);
    let mut users = Vec::with_capacity(cfg.users);
    for style in styles.iter().take(cfg.users) {
        let [train_pool, val_pool, test_pool] = g.partition_pools(&by_cat);
        g.check_feasible(&train_pool, n_train, "train")?;
        g.check_feasible(&val_pool, n_vt + n_vs, "validation")?;
        g.check_feasible(&test_pool, n_test, "test")?;
        let mut splits = UserSplits::default();
        splits.train = g.compose(style, &train_pool, n_train)?;
        let val = g.compose(style, &val_pool, n_vt + n_vs)?;
        splits.get_mut(Split::ValTeacher).extend_from_slice(&val[..n_vt]);
        splits.get_mut(Split::ValStudent).extend_from_slice(&val[n_vt..]);
        splits.test = g.compose(style, &test_pool, n_test)?;
        users.push(splits);
    }

    let mut cold_users = Vec::with_capacity(cfg.cold_users);
    for (k, style) in styles.iter().enumerate().skip(cfg.users) {
        let [profile_pool, _, test_pool] = g.partition_pools(&by_cat);
        g.check_feasible(&profile_pool, cfg.cold_profile_size, "cold profile")?;
        g.check_feasible(&test_pool, n_test, "cold test")?;
        let profile = g.compose(style, &profile_pool, cfg.cold_profile_size)?;
        let test = g.compose(style, &test_pool, n_test)?;
        cold_users.push(ColdUser { id: k, profile, test });
    }

    Ok(Dataset {
        config: cfg.clone(),
        items: g.items,
        outfits: g.outfits,
        users,
        cold_users,
        oracle: Some(Oracle {
            styles: styles
                .iter()
                .map(|z| z.iter().map(|&v| v as f32).collect())
                .collect(),
        }),
    })
}
