mod common;

use common::identities::permutation_gap;
use outfitrank::diffcore::cosine;
use outfitrank::encoder::{read_checkpoint, write_checkpoint, EncoderConfig, ModelParams, Tier, CHECKPOINT_VERSION};
use outfitrank::Error;

fn model(tier: Tier, seed: u64) -> ModelParams<f32> {
    let mut cfg = EncoderConfig::new(6, 5, tier);
    cfg.d = 16;
    cfg.heads = 4;
    ModelParams::new(cfg, seed).unwrap()
}

fn outfit() -> Vec<Vec<f32>> {
    (0..3).map(|i| (0..6).map(|j| ((i * 6 + j) as f32 * 0.71).sin()).collect()).collect()
}

#[test]
fn encoding_ignores_item_order() {
    assert!(permutation_gap(3, 100) < 1e-6);
}

#[test]
fn same_seed_same_weights() {
    assert_eq!(model(Tier::StudentS, 9), model(Tier::StudentS, 9));
    assert_ne!(model(Tier::StudentS, 9).store, model(Tier::StudentS, 10).store);
}

#[test]
fn output_has_width_d_and_scores_are_cosines() {
    let m = model(Tier::StudentXs, 1);
    let items = outfit();
    let refs: Vec<&[f32]> = items.iter().map(Vec::as_slice).collect();
    let o = m.encode_outfit(&refs).unwrap();
    assert_eq!(o.len(), 16);
    let s = m.preference_score(2, &refs).unwrap();
    assert!((-1.0..=1.0).contains(&s));
    assert_eq!(s, cosine(m.user_embedding(2).unwrap(), &o).unwrap());
    let batch = m.score_batch(&[0, 2], &[refs.clone(), refs[..1].to_vec()]).unwrap();
    assert_eq!(batch.len(), 2);
    assert_eq!(batch[1][0], s);
    assert_eq!(m.project(&refs).unwrap().len(), 16);
}

#[test]
fn user_embeddings_start_small() {
    let m = model(Tier::StudentM, 2);
    for u in 0..5 {
        assert!(m.user_embedding(u).unwrap().iter().all(|v| v.abs() <= 0.1));
    }
}

#[test]
fn tiers_differ_only_in_item_encoder_width() {
    let small = model(Tier::StudentXs, 1);
    let large = model(Tier::TeacherLarge, 1);
    assert!(small.store.num_scalars() < large.store.num_scalars());
    assert_eq!(small.store.len(), large.store.len());
}

#[test]
fn bad_inputs_are_rejected() {
    let m = model(Tier::StudentS, 1);
    assert!(matches!(m.user_embedding(5), Err(Error::Lookup(_))));
    assert!(matches!(m.encode_outfit(&[]), Err(Error::Input(_))));
    let short = [0.0f32; 3];
    assert!(matches!(m.encode_outfit(&[&short]), Err(Error::Shape(_))));
    let mut cfg = EncoderConfig::new(6, 5, Tier::StudentS);
    cfg.d = 10;
    cfg.heads = 4;
    assert!(matches!(ModelParams::<f32>::new(cfg, 0), Err(Error::Config(_))));
}

#[test]
fn single_item_outfits_encode() {
    let m = model(Tier::StudentS, 1);
    let items = outfit();
    assert!(m.encode_outfit(&[&items[0]]).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let m = model(Tier::TeacherLarge, 4);
    let mut buf = Vec::new();
    write_checkpoint(&m, &mut buf).unwrap();
    let back: ModelParams<f32> = read_checkpoint(&mut buf.as_slice()).unwrap();
    assert_eq!(back, m);
    let mut again = Vec::new();
    write_checkpoint(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn checkpoint_errors_are_reported() {
    let m = model(Tier::StudentS, 4);
    let mut buf = Vec::new();
    write_checkpoint(&m, &mut buf).unwrap();
    let mut wrong = buf.clone();
    wrong[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    assert!(matches!(
        read_checkpoint::<f32>(&mut wrong.as_slice()),
        Err(Error::Version { found, expected }) if found == CHECKPOINT_VERSION + 1 && expected == CHECKPOINT_VERSION
    ));
    let cut = &buf[..buf.len() / 2];
    assert!(matches!(read_checkpoint::<f32>(&mut &cut[..]), Err(Error::Parse { .. })));
    let mut bad_magic = buf.clone();
    bad_magic[0] = b'X';
    assert!(read_checkpoint::<f32>(&mut bad_magic.as_slice()).is_err());
}

#[test]
fn f64_model_loads_from_f32_checkpoint() {
    let m = model(Tier::StudentS, 4);
    let mut buf = Vec::new();
    write_checkpoint(&m, &mut buf).unwrap();
    let wide: ModelParams<f64> = read_checkpoint(&mut buf.as_slice()).unwrap();
    let items = outfit();
    let r32: Vec<&[f32]> = items.iter().map(Vec::as_slice).collect();
    let items64: Vec<Vec<f64>> = items.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let r64: Vec<&[f64]> = items64.iter().map(Vec::as_slice).collect();
    let a = m.preference_score(1, &r32).unwrap() as f64;
    let b = wide.preference_score(1, &r64).unwrap();
    assert!((a - b).abs() < 1e-5);
}
