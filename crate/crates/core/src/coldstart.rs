//! Scoring for users absent at training time by aggregating the scores of similar known users.
//! Nothing is written into the model.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::datagen::{Dataset, OutfitId, UserId};
use crate::diffcore::cosine;
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const COLD_PROFILE_VERSION: u32 = 1;
const MAGIC: &str = "outfitrank-coldprofiles";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Avg,
    WAvg,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Avg => "avg",
            Strategy::WAvg => "w-avg",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Strategy::Avg),
            "w-avg" | "wavg" => Ok(Strategy::WAvg),
            other => Err(Error::Config(format!("unknown cold-start strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColdStartConfig {
    /// Exclusive similarity threshold for neighbours.
    pub delta: f64,
    pub tau_wavg: f64,
    pub strategy: Strategy,
}

impl Default for ColdStartConfig {
    fn default() -> Self {
        ColdStartConfig {
            delta: 0.0,
            tau_wavg: 0.2,
            strategy: Strategy::WAvg,
        }
    }
}

impl ColdStartConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_wavg > 0.0) || !self.tau_wavg.is_finite() {
            return Err(Error::Config(format!("tau_wavg must be positive, got {}", self.tau_wavg)));
        }
        if !self.delta.is_finite() {
            return Err(Error::Config("delta must be finite".into()));
        }
        Ok(())
    }
}

/// Outfits a cold user has interacted with.
#[derive(Clone, Debug, PartialEq)]
pub struct ColdProfile {
    pub user: UserId,
    pub outfits: Vec<OutfitId>,
}

/// Mean preference score of known user `user` over the profile's outfit representations.
pub fn user_similarity<T: Scalar>(model: &ModelParams<T>, user: UserId, profile: &[Vec<T>]) -> Result<f64> {
    if profile.is_empty() {
        return Err(Error::Input("empty cold profile".into()));
    }
    let u = model.user_embedding(user)?;
    let mut total = 0.0;
    for o in profile {
        total += cosine(u, o)?.as_f64();
    }
    Ok(total / profile.len() as f64)
}

/// Similarity of every known user (index = user id) to the profile.
pub fn all_similarities<T: Scalar>(model: &ModelParams<T>, profile: &[Vec<T>]) -> Result<Vec<f64>> {
    (0..model.user_count()).map(|u| user_similarity(model, u, profile)).collect()
}

/// Users with similarity above `delta`, plus the most similar user (lowest id on ties).
/// Returned in increasing id order; never empty.
pub fn neighborhood(similarities: &[f64], delta: f64) -> Result<Vec<UserId>> {
    if similarities.is_empty() {
        return Err(Error::Input("no known users to form a neighbourhood".into()));
    }
    let mut best = 0;
    for (u, &s) in similarities.iter().enumerate() {
        if s > similarities[best] {
            best = u;
        }
    }
    Ok(similarities
        .iter()
        .enumerate()
        .filter(|&(u, &s)| s > delta || u == best)
        .map(|(u, _)| u)
        .collect())
}

/// Plain mean of the neighbours' scores.
pub fn aggregate_avg(scores: &[f64]) -> f64 {
    assert!(!scores.is_empty(), "neighbourhood is never empty");
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Softmax(similarity / tau) weights over the neighbours.
pub fn wavg_weights(similarities: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau_wavg must be positive, got {tau}")));
    }
    assert!(!similarities.is_empty(), "neighbourhood is never empty");
    let max = similarities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = similarities.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

pub fn aggregate_wavg(similarities: &[f64], scores: &[f64], tau: f64) -> Result<f64> {
    if similarities.len() != scores.len() {
        return Err(Error::Shape("one similarity per neighbour score required".into()));
    }
    let w = wavg_weights(similarities, tau)?;
    Ok(w.iter().zip(scores).map(|(w, s)| w * s).sum())
}

/// Scores outfits for one cold user from a frozen model.
#[derive(Clone, Debug)]
pub struct ColdScorer<'m, T> {
    model: &'m ModelParams<T>,
    pub neighbors: Vec<UserId>,
    /// Aggregation weight per neighbour, summing to 1.
    pub weights: Vec<f64>,
}

impl<'m, T: Scalar> ColdScorer<'m, T> {
    /// `profile` holds the encoded outfits the cold user interacted with.
    pub fn new(model: &'m ModelParams<T>, profile: &[Vec<T>], cfg: &ColdStartConfig) -> Result<Self> {
        cfg.validate()?;
        let sims = all_similarities(model, profile)?;
        let neighbors = neighborhood(&sims, cfg.delta)?;
        let weights = match cfg.strategy {
            Strategy::Avg => vec![1.0 / neighbors.len() as f64; neighbors.len()],
            Strategy::WAvg => {
                let ns: Vec<f64> = neighbors.iter().map(|&u| sims[u]).collect();
                wavg_weights(&ns, cfg.tau_wavg)?
            }
        };
        Ok(ColdScorer {
            model,
            neighbors,
            weights,
        })
    }

    pub fn score_encoded(&self, outfit: &[T]) -> Result<f64> {
        let mut total = 0.0;
        for (&u, w) in self.neighbors.iter().zip(&self.weights) {
            total += w * cosine(self.model.user_embedding(u)?, outfit)?.as_f64();
        }
        Ok(total)
    }

    pub fn score(&self, items: &[&[T]]) -> Result<f64> {
        self.score_encoded(&self.model.encode_outfit(items)?)
    }
}

/// Encodes dataset outfits with `model`, casting features to its precision.
pub fn encode_outfits<T: Scalar>(model: &ModelParams<T>, dataset: &Dataset, outfits: &[OutfitId]) -> Result<Vec<Vec<T>>> {
    outfits
        .iter()
        .map(|&o| {
            let feats: Vec<Vec<T>> = dataset
                .outfit_features(o)?
                .iter()
                .map(|f| f.iter().map(|&v| T::lit(v as f64)).collect())
                .collect();
            let rows: Vec<&[T]> = feats.iter().map(Vec::as_slice).collect();
            model.encode_outfit(&rows)
        })
        .collect()
}

/// Cold users' profiles from a dataset.
pub fn dataset_profiles(dataset: &Dataset) -> Vec<ColdProfile> {
    dataset
        .cold_users
        .iter()
        .map(|c| ColdProfile {
            user: c.id,
            outfits: c.profile.clone(),
        })
        .collect()
}

pub fn write_cold_profiles(profiles: &[ColdProfile], w: &mut impl Write) -> Result<()> {
    writeln!(w, "{MAGIC} {COLD_PROFILE_VERSION}")?;
    for p in profiles {
        let ids: Vec<String> = p.outfits.iter().map(usize::to_string).collect();
        writeln!(w, "{} {}", p.user, ids.join(" "))?;
    }
    Ok(())
}

/// Reads `<cold user id> <outfit id>…` lines after a version header.
pub fn read_cold_profiles(r: impl BufRead) -> Result<Vec<ColdProfile>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::parse("profiles", 1, "empty file"))??;
    let mut head = header.split_whitespace();
    if head.next() != Some(MAGIC) {
        return Err(Error::parse("profiles", 1, "not a cold-profile file"));
    }
    let version: u32 = head
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse("profiles", 1, "missing version"))?;
    if version != COLD_PROFILE_VERSION {
        return Err(Error::Version {
            found: version,
            expected: COLD_PROFILE_VERSION,
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse("profiles", i + 2, e.to_string()))?;
        let (&user, outfits) = nums
            .split_first()
            .ok_or_else(|| Error::parse("profiles", i + 2, "missing user id"))?;
        if outfits.is_empty() {
            return Err(Error::parse("profiles", i + 2, format!("cold user {user} has no outfits")));
        }
        out.push(ColdProfile {
            user,
            outfits: outfits.to_vec(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, Tier};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(users: usize) -> ModelParams<f64> {
        let mut cfg = EncoderConfig::new(4, users, Tier::StudentXs);
        cfg.d = 8;
        cfg.heads = 2;
        ModelParams::new(cfg, 3).unwrap()
    }

    #[test]
    fn similarity_is_mean_of_scores() {
        let m = model(3);
        let u = m.user_embedding(1).unwrap().to_vec();
        assert!((user_similarity(&m, 1, &[u.clone()]).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        assert!(user_similarity(&m, 1, &[u, neg]).unwrap().abs() < 1e-12);
        assert!(matches!(user_similarity(&m, 1, &[]), Err(Error::Input(_))));
        assert!(matches!(user_similarity(&m, 7, &[vec![1.0; 8]]), Err(Error::Lookup(_))));
    }

    #[test]
    fn neighborhood_rules() {
        assert_eq!(neighborhood(&[-0.3, -0.1, -0.2], 0.0).unwrap(), vec![1]);
        assert_eq!(neighborhood(&[0.3, 0.1, 0.2], 0.0).unwrap(), vec![0, 1, 2]);
        assert_eq!(neighborhood(&[-0.5, -0.2, -0.2], 0.0).unwrap(), vec![1]);
        // delta is exclusive
        assert_eq!(neighborhood(&[0.0, 0.5], 0.0).unwrap(), vec![1]);
        assert!(neighborhood(&[], 0.0).is_err());
    }

    #[test]
    fn neighborhood_never_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = rng.random_range(1..20);
            let sims: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let delta = rng.random_range(-1.5..1.5);
            assert!(!neighborhood(&sims, delta).unwrap().is_empty());
        }
    }

    #[test]
    fn aggregation_examples() {
        assert_eq!(aggregate_avg(&[0.7]), 0.7);
        assert!((aggregate_avg(&[0.2, 0.6]) - 0.4).abs() < 1e-15);
        let w = wavg_weights(&[0.1, 0.5, -0.3], 0.2).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(aggregate_wavg(&[0.3, 0.3], &[0.2, 0.6], 0.2).unwrap(), aggregate_avg(&[0.2, 0.6]));
        assert_eq!(aggregate_wavg(&[0.9], &[0.25], 0.2).unwrap(), 0.25);
        let flat = aggregate_wavg(&[0.9, -0.4, 0.1], &[0.2, 0.6, -0.5], 1e4).unwrap();
        assert!((flat - aggregate_avg(&[0.2, 0.6, -0.5])).abs() < 1e-3);
        assert!(matches!(wavg_weights(&[0.1], 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn aggregates_are_monotone_in_scores() {
        let sims = [0.4, 0.1, 0.3];
        let base = [0.2, -0.1, 0.5];
        for i in 0..3 {
            let mut up = base;
            up[i] += 0.05;
            assert!(aggregate_avg(&up) > aggregate_avg(&base));
            assert!(aggregate_wavg(&sims, &up, 0.2).unwrap() > aggregate_wavg(&sims, &base, 0.2).unwrap());
        }
    }

    #[test]
    fn low_similarity_newcomer_has_small_weight() {
        let sims = [0.52, 0.51, 0.50];
        let scores = [0.1, 0.2, 0.3];
        let before = aggregate_wavg(&sims, &scores, 0.01).unwrap();
        let after = aggregate_wavg(&[0.52, 0.51, 0.50, 0.49], &[0.1, 0.2, 0.3, -0.9], 0.01).unwrap();
        let w = wavg_weights(&[0.52, 0.51, 0.50, 0.49], 0.01).unwrap();
        assert!(w[3] < 1.0 / 4.0);
        // the mixture moves toward -0.9 by exactly the newcomer's weight
        assert!(after < before);
        assert!((after - ((1.0 - w[3]) * before + w[3] * -0.9)).abs() < 1e-12);
    }

    #[test]
    fn scorer_matches_manual_aggregation() {
        let m = model(5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let profile: Vec<Vec<f64>> = (0..2).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let outfit: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sims = all_similarities(&m, &profile).unwrap();
        let nb = neighborhood(&sims, 0.0).unwrap();
        let scores: Vec<f64> = nb.iter().map(|&u| cosine(m.user_embedding(u).unwrap(), &outfit).unwrap()).collect();
        let ns: Vec<f64> = nb.iter().map(|&u| sims[u]).collect();
        for (strategy, expected) in [
            (Strategy::Avg, aggregate_avg(&scores)),
            (Strategy::WAvg, aggregate_wavg(&ns, &scores, 0.2).unwrap()),
        ] {
            let cfg = ColdStartConfig {
                strategy,
                ..ColdStartConfig::default()
            };
            let s = ColdScorer::new(&m, &profile, &cfg).unwrap();
            assert!((s.score_encoded(&outfit).unwrap() - expected).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&s.score_encoded(&outfit).unwrap()));
        }
    }

    #[test]
    fn profile_file_round_trip() {
        let p = vec![
            ColdProfile { user: 50, outfits: vec![3, 4, 5] },
            ColdProfile { user: 51, outfits: vec![9] },
        ];
        let mut buf = Vec::new();
        write_cold_profiles(&p, &mut buf).unwrap();
        assert_eq!(read_cold_profiles(buf.as_slice()).unwrap(), p);
        assert!(read_cold_profiles("outfitrank-coldprofiles 1\n50\n".as_bytes()).is_err());
        assert!(matches!(
            read_cold_profiles("outfitrank-coldprofiles 2\n".as_bytes()),
            Err(Error::Version { .. })
        ));
    }
}
