mod common;

use common::identities::{closed_forms, sign_law};
use outfitrank::objectives::{bpr_loss, cl_loss, fnd_cl_loss, fnd_loss, npair_loss, LossConfig, TeacherCache};
use outfitrank::encoder::{EncoderConfig, ModelParams, Tier};
use outfitrank::Error;

#[test]
fn closed_form_values() {
    let c = closed_forms(11);
    assert_eq!(c.npair_equal, 0.0);
    assert_eq!(c.cl_single, 0.0);
    assert!(c.cl_identical < 1e-10, "{}", c.cl_identical);
    assert_eq!(c.fnd_unit_signals, 0.0);
    assert!(c.bpr_zero_margin < 1e-12);
}

#[test]
fn gradient_sign_follows_false_negativeness() {
    let s = sign_law(5, 100);
    assert_eq!(s.sign_mismatches, 0);
    assert!(s.worst_magnitude_error < 1e-6, "{}", s.worst_magnitude_error);
}

#[test]
fn zero_signal_drops_a_negative_from_the_gradient() {
    let l = fnd_loss(&[0.3], &[vec![0.9, -0.2]], &[vec![0.0, 1.0]], 0.1).unwrap();
    assert_eq!(l.grad_neg[0][0], 0.0);
    assert!(l.grad_neg[0][1] > 0.0);
}

#[test]
fn pulled_negative_moves_toward_the_user() {
    // descent on a negative score with d < 0 raises it
    let l = fnd_loss(&[0.5], &[vec![0.2]], &[vec![-1.0]], 0.1).unwrap();
    assert!(l.grad_neg[0][0] < 0.0);
    let pushed = fnd_loss(&[0.5], &[vec![0.2]], &[vec![1.0]], 0.1).unwrap();
    assert!(pushed.grad_neg[0][0] > 0.0);
}

#[test]
fn npair_worked_example() {
    // one negative, equal scores: ln 2; a clear winner drives the loss toward zero
    let l = npair_loss(&[0.4], &[vec![0.4]], 0.1).unwrap();
    assert!((l.value - 2f64.ln()).abs() < 1e-15);
    let l = npair_loss(&[1.0], &[vec![-1.0]], 0.1).unwrap();
    assert!(l.value < 1e-8);
    let manual = (1.0f64 + (-20.0f64).exp()).ln();
    assert!((l.value - manual).abs() < 1e-15);
}

#[test]
fn bpr_matches_softplus() {
    let l = bpr_loss(&[0.1, -0.3], &[0.4, -0.5], 0.5).unwrap();
    let sp = |x: f64| (1.0 + (-x).exp()).ln();
    let expected = (sp((0.1 - 0.4) / 0.5) + sp((-0.3 + 0.5) / 0.5)) / 2.0;
    assert!((l.value - expected).abs() < 1e-14);
}

#[test]
fn cl_matches_hand_computation() {
    // 2 outfits, 4 views in 2-d
    let v = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.0]];
    let tau = 0.5;
    let cos = |a: &Vec<f64>, b: &Vec<f64>| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let mut total = 0.0;
    for i in 0..4 {
        let partner = i ^ 1;
        let denom: f64 = (0..4).filter(|&j| j != i).map(|j| (cos(&v[i], &v[j]) / tau).exp()).sum();
        total += -((cos(&v[i], &v[partner]) / tau).exp() / denom).ln();
    }
    let (l, _) = cl_loss(&v, tau).unwrap();
    assert!((l - total / 4.0).abs() < 1e-12);
}

#[test]
fn shape_and_parameter_errors() {
    assert!(matches!(npair_loss(&[0.1], &[], 0.1), Err(Error::Shape(_))));
    assert!(matches!(npair_loss::<f64>(&[], &[], 0.1), Err(Error::Input(_))));
    assert!(matches!(fnd_loss(&[0.1], &[vec![0.2]], &[vec![]], 0.1), Err(Error::Shape(_))));
    assert!(matches!(cl_loss(&[vec![1.0]], 0.1), Err(Error::Input(_))));
    assert!(matches!(npair_loss(&[0.1], &[vec![0.2]], 0.0), Err(Error::Config(_))));
    assert!(matches!(fnd_cl_loss(1.0, 1.0, -0.1), Err(Error::Config(_))));
    let mut c = LossConfig::<f64>::default();
    assert!(c.validate().is_ok());
    c.alpha = 0.0;
    assert!(c.validate().is_err());
    c = LossConfig { lambda: -1.0, ..LossConfig::default() };
    assert!(c.validate().is_err());
}

#[test]
fn fnd_cl_is_a_weighted_sum() {
    assert_eq!(fnd_cl_loss(0.7, 2.0, 0.0).unwrap(), 0.7);
    assert!((fnd_cl_loss(0.7f64, 2.0, 0.2).unwrap() - 1.1).abs() < 1e-15);
}

fn tiny_teacher() -> ModelParams<f64> {
    let mut cfg = EncoderConfig::new(3, 2, Tier::TeacherLarge);
    cfg.d = 8;
    cfg.heads = 2;
    ModelParams::new(cfg, 4).unwrap()
}

#[test]
fn teacher_cache_signal_is_scaled_gap_to_boundary() {
    let teacher = tiny_teacher();
    let items = [vec![0.1, 0.2, 0.3], vec![-0.5, 0.4, 0.0]];
    let refs: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
    let direct = teacher.preference_score(1, &refs).unwrap();
    let cache = TeacherCache::new(teacher, vec![None, Some(0.25)]).unwrap();
    let d = cache.false_negativeness(1, &[7, 3], &refs, 1.5).unwrap();
    assert!((d - 1.5 * (0.25 - direct)).abs() < 1e-12);
    // the memo is keyed by the item set
    let swapped: Vec<&[f64]> = vec![refs[1], refs[0]];
    let d2 = cache.false_negativeness(1, &[3, 7], &swapped, 1.5).unwrap();
    assert_eq!(d, d2);
    assert_eq!(cache.memo_len(), 1);
    assert!(matches!(cache.false_negativeness(0, &[7, 3], &refs, 1.5), Err(Error::Lookup(_))));
    let forced = cache.with_signal_override(1.0);
    assert_eq!(forced.false_negativeness(1, &[7, 3], &refs, 1.5).unwrap(), 1.0);
}

#[test]
fn teacher_cache_rejects_misaligned_boundaries() {
    assert!(matches!(TeacherCache::new(tiny_teacher(), vec![Some(0.1)]), Err(Error::Shape(_))));
}
