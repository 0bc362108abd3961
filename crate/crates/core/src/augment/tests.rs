use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datagen::{generate_world, WorldConfig};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Three categories of `per` items with random 4-d latents.
fn random_index(per: usize, seed: u64) -> SimilarityIndex {
    let mut r = rng(seed);
    let cats: Vec<usize> = (0..3 * per).map(|i| i / per).collect();
    let lat = (0..3 * per).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    SimilarityIndex::new(cats, lat).unwrap()
}

#[test]
fn erase_drops_one_item_uniformly() {
    let outfit = [10, 20, 30];
    let mut r = rng(0);
    let mut removed = [0usize; 3];
    let trials = 3000;
    for _ in 0..trials {
        let v = erase(&outfit, &mut r).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|i| outfit.contains(i)));
        let gone = outfit.iter().position(|i| !v.contains(i)).unwrap();
        removed[gone] += 1;
    }
    for c in removed {
        assert!((c as f64 / trials as f64 - 1.0 / 3.0).abs() < 0.05, "{removed:?}");
    }
}

#[test]
fn erase_rejects_singletons() {
    assert!(matches!(erase(&[4], &mut rng(0)), Err(Error::Inapplicable(_))));
}

#[test]
fn similar_items_matches_brute_force() {
    let index = random_index(20, 1);
    for item in 0..60 {
        let got: HashSet<ItemId> = index.similar_items(item, 5).unwrap().into_iter().collect();
        let cat = item / 20;
        let mut all: Vec<(f64, usize)> = (cat * 20..cat * 20 + 20)
            .filter(|&j| j != item)
            .map(|j| {
                let (a, b) = (index.latent(item).unwrap(), index.latent(j).unwrap());
                let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
                let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                (dot / (na * nb), j)
            })
            .collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let expected: HashSet<ItemId> = all[..5].iter().map(|p| p.1).collect();
        assert_eq!(got, expected, "item {item}");
    }
}

#[test]
fn similar_items_truncates_and_excludes_query() {
    let index = random_index(6, 2);
    let n = index.similar_items(7, 50).unwrap();
    assert_eq!(n.len(), 5);
    assert!(!n.contains(&7));
    assert!(n.iter().all(|&j| index.category(j).unwrap() == 1));
    assert!(matches!(index.similar_items(99, 3), Err(Error::Lookup(_))));
}

#[test]
fn duplicate_item_is_top_neighbor() {
    let idx = random_index(10, 3);
    let mut lat: Vec<Vec<f32>> = (0..30).map(|i| idx.latent(i).unwrap().to_vec()).collect();
    lat[4] = lat[7].clone();
    let index = SimilarityIndex::new((0..30).map(|i| i / 10).collect(), lat).unwrap();
    assert_eq!(index.similar_items(7, 1).unwrap(), vec![4]);
    assert!((index.similarity(4, 7).unwrap() - 1.0).abs() < 1e-12);
    let mut r = rng(4);
    for _ in 0..20 {
        let v = replace_at(&[7, 15, 25], 0, &index, 1, &mut r).unwrap();
        assert_eq!(v, vec![4, 15, 25]);
    }
}

#[test]
fn replace_keeps_category_and_changes_one_position() {
    let index = random_index(20, 5);
    let mut r = rng(6);
    for _ in 0..1000 {
        let outfit = [r.random_range(0..20), r.random_range(20..40), r.random_range(40..60)];
        let v = replace(&outfit, &index, &mut r, DEFAULT_REPLACE_K).unwrap();
        assert_eq!(v.len(), 3);
        let diff: Vec<usize> = (0..3).filter(|&p| v[p] != outfit[p]).collect();
        assert_eq!(diff.len(), 1);
        let p = diff[0];
        assert_eq!(index.category(v[p]).unwrap(), index.category(outfit[p]).unwrap());
        assert!(index.similar_items(outfit[p], 5).unwrap().contains(&v[p]));
    }
}

#[test]
fn replace_needs_a_second_item_in_category() {
    let index = SimilarityIndex::new(vec![0, 1, 1], vec![vec![1.0], vec![1.0], vec![2.0]]).unwrap();
    assert!(matches!(replace_at(&[0, 1], 0, &index, 5, &mut rng(0)), Err(Error::Inapplicable(_))));
}

#[test]
fn identical_kinds_alter_different_items() {
    let index = random_index(20, 7);
    let mut r = rng(8);
    let pair = AugmentationPair::new(AugmentationKind::Erase, AugmentationKind::Erase).unwrap();
    for _ in 0..500 {
        let (a, b) = make_views(&[1, 21, 41], pair, None, 5, &mut r).unwrap();
        assert_eq!(a.len(), 2);
        assert_ne!(a, b);
    }
    let pair = AugmentationPair::new(AugmentationKind::Replace, AugmentationKind::Replace).unwrap();
    for _ in 0..500 {
        let outfit = [1, 21, 41];
        let (a, b) = make_views(&outfit, pair, Some(&index), 5, &mut r).unwrap();
        let pa = (0..3).find(|&p| a[p] != outfit[p]).unwrap();
        let pb = (0..3).find(|&p| b[p] != outfit[p]).unwrap();
        assert_ne!(pa, pb);
    }
}

#[test]
fn view_shapes_follow_the_pair() {
    let index = random_index(20, 9);
    let mut r = rng(10);
    let outfit = [3, 23, 43];
    let p = AugmentationPair::new(AugmentationKind::Identity, AugmentationKind::Erase).unwrap();
    let (a, b) = make_views(&outfit, p, None, 5, &mut r).unwrap();
    assert_eq!(a, outfit.to_vec());
    assert_eq!(b.len(), 2);
    let p = AugmentationPair::new(AugmentationKind::Erase, AugmentationKind::Replace).unwrap();
    let (a, b) = make_views(&outfit, p, Some(&index), 5, &mut r).unwrap();
    assert_eq!((a.len(), b.len()), (2, 3));
}

#[test]
fn singleton_outfits_fall_back_to_identity() {
    let index = random_index(20, 11);
    let mut r = rng(12);
    let p = AugmentationPair::new(AugmentationKind::Erase, AugmentationKind::Replace).unwrap();
    let (a, b) = make_views(&[5], p, Some(&index), 5, &mut r).unwrap();
    assert_eq!(a, vec![5]);
    assert_eq!(b.len(), 1);
    assert_ne!(b, vec![5]);
}

#[test]
fn identity_pair_is_forbidden() {
    assert!(AugmentationPair::new(AugmentationKind::Identity, AugmentationKind::Identity).is_err());
    assert!("identity,identity".parse::<AugmentationPair>().is_err());
    let p: AugmentationPair = "erase,replace".parse().unwrap();
    assert_eq!(p.to_string(), "erase,replace");
    assert_eq!(AugmentationPair::all().len(), 5);
}

#[test]
fn views_are_reproducible() {
    let index = random_index(20, 13);
    let p = AugmentationPair::default();
    let run = |seed| {
        let mut r = rng(seed);
        (0..50)
            .map(|i| make_views(&[i % 20, 20 + i % 20, 40 + i % 20], p, Some(&index), 5, &mut r).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(3), run(3));
}

#[test]
fn zero_epochs_leave_init_untouched() {
    let items: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64; 6]).collect();
    let rows: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
    let cfg = AutoencoderConfig {
        epochs: 0,
        latent: 3,
        ..AutoencoderConfig::default()
    };
    let (ae, report) = train_autoencoder(&rows, &cfg).unwrap();
    assert_eq!(ae, Autoencoder::<f64>::new(6, 3, true, cfg.seed).unwrap());
    assert_eq!(report.holdout_mse_initial, report.holdout_mse_final);
}

#[test]
fn linear_autoencoder_overfits_small_set() {
    let mut r = rng(14);
    let items: Vec<Vec<f64>> = (0..50).map(|_| (0..8).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let rows: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
    let cfg = AutoencoderConfig {
        latent: 8,
        relu: false,
        epochs: 400,
        lr: 0.05,
        batch_size: 10,
        holdout: 0.0,
        ..AutoencoderConfig::default()
    };
    let (ae, report) = train_autoencoder(&rows, &cfg).unwrap();
    let mse = ae.mse(&rows).unwrap();
    assert!(mse < 1e-3, "final mse {mse}, curve tail {:?}", &report.train_mse[390..]);
}

#[test]
fn holdout_reconstruction_improves_on_synthetic_items() {
    let d = generate_world(&WorldConfig::default()).unwrap();
    let rows: Vec<&[f32]> = d.items.iter().map(|it| it.features.as_slice()).collect();
    let (ae, report) = train_autoencoder(&rows, &AutoencoderConfig::default()).unwrap();
    assert!(
        report.holdout_mse_final < report.holdout_mse_initial,
        "{report:?}"
    );
    let index = SimilarityIndex::from_autoencoder(&d, &ae).unwrap();
    assert_eq!(index.len(), d.items.len());
    assert_eq!(index.latent_dim(), 32);
}

#[test]
fn index_dump_round_trip() {
    let index = random_index(5, 15);
    let mut buf = Vec::new();
    write_index_dump(&index, &mut buf).unwrap();
    assert_eq!(buf.len(), 8 + 12 + 15 * (8 + 16));
    let back = read_index_dump(&mut buf.as_slice()).unwrap();
    assert_eq!(back, index);
}
