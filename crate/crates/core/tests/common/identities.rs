//! Closed-form loss values, the FND gradient-sign law and encoder permutation invariance.

use outfitrank::encoder::{EncoderConfig, ModelParams, Tier};
use outfitrank::objectives::{bpr_loss, cl_loss, fnd_loss, fnd_pair_gradient, npair_loss};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::random_vec;

/// Largest deviation of each closed form over a small grid of batch shapes.
#[derive(Debug, Default)]
pub struct ClosedForms {
    pub npair_equal: f64,
    pub cl_single: f64,
    pub cl_identical: f64,
    pub fnd_unit_signals: f64,
    pub bpr_zero_margin: f64,
}

pub fn closed_forms(seed: u64) -> ClosedForms {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ClosedForms::default();
    for _ in 0..50 {
        let b = rng.random_range(1..6);
        let n = rng.random_range(1..40);
        let tau = rng.random_range(0.05..1.0);
        let r: f64 = rng.random_range(-1.0..1.0);

        let pos = vec![r; b];
        let neg = vec![vec![r; n]; b];
        let l = npair_loss(&pos, &neg, tau).unwrap().value;
        out.npair_equal = out.npair_equal.max((l - ((n + 1) as f64).ln()).abs());

        let pos = random_vec(&mut rng, b, 1.0);
        let neg: Vec<Vec<f64>> = (0..b).map(|_| random_vec(&mut rng, n, 1.0)).collect();
        let ones = vec![vec![1.0; n]; b];
        let np = npair_loss(&pos, &neg, tau).unwrap();
        let fnd = fnd_loss(&pos, &neg, &ones, tau).unwrap();
        let same = np.value == fnd.value && np.grad_pos == fnd.grad_pos && np.grad_neg == fnd.grad_neg;
        if !same {
            out.fnd_unit_signals = f64::INFINITY;
        }

        let q = random_vec(&mut rng, b, 1.0);
        let l = bpr_loss(&q, &q, tau).unwrap().value;
        out.bpr_zero_margin = out.bpr_zero_margin.max((l - 2f64.ln()).abs());

        let d = rng.random_range(2..9);
        let pair = vec![random_vec(&mut rng, d, 1.0), random_vec(&mut rng, d, 1.0)];
        out.cl_single = out.cl_single.max(cl_loss(&pair, tau).unwrap().0.abs());

        let v = random_vec(&mut rng, d, 1.0);
        let views = vec![v; 2 * n];
        let l = cl_loss(&views, tau).unwrap().0;
        out.cl_identical = out.cl_identical.max((l - ((2 * n - 1) as f64).ln()).abs());
    }
    out
}

#[derive(Debug, Default)]
pub struct SignLaw {
    pub instances: usize,
    pub negatives: usize,
    pub sign_mismatches: usize,
    pub worst_magnitude_error: f64,
}

/// Random single-pair FND instances: the derivative w.r.t. each negative score must carry the
/// sign of its signal and equal `(d/τ)·p` evaluated directly from the softmax definition.
pub fn sign_law(seed: u64, instances: usize) -> SignLaw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SignLaw { instances, ..SignLaw::default() };
    for _ in 0..instances {
        let k = rng.random_range(1..33);
        let tau = rng.random_range(0.05..1.0);
        let pos: f64 = rng.random_range(-1.0..1.0);
        let neg = random_vec(&mut rng, k, 1.0);
        let sig = random_vec(&mut rng, k, 2.5);
        let loss = fnd_loss(&[pos], &[neg.clone()], &[sig.clone()], tau).unwrap();
        let (_, analytic) = fnd_pair_gradient(pos, &neg, &sig, tau).unwrap();

        // direct formula, no max-shift
        let denom: f64 = (pos / tau).exp() + neg.iter().zip(&sig).map(|(r, d)| (d * r / tau).exp()).sum::<f64>();
        for j in 0..k {
            out.negatives += 1;
            let g = loss.grad_neg[0][j];
            if g.signum() != sig[j].signum() || g == 0.0 {
                out.sign_mismatches += 1;
            }
            let p = (sig[j] * neg[j] / tau).exp() / denom;
            let direct = sig[j] / tau * p;
            let err = (analytic[j] - direct).abs().max((g - direct).abs());
            out.worst_magnitude_error = out.worst_magnitude_error.max(err);
        }
    }
    out
}

/// Largest element-wise difference between an outfit's encoding and those of 5 shuffles, over
/// `outfits` random outfits, at f32.
pub fn permutation_gap(seed: u64, outfits: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = EncoderConfig::new(32, 4, Tier::TeacherLarge);
    cfg.d = 64;
    let model = ModelParams::<f32>::new(cfg, seed).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..outfits {
        let n = rng.random_range(2..7);
        let items: Vec<Vec<f32>> = (0..n).map(|_| (0..32).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
        let refs: Vec<&[f32]> = items.iter().map(Vec::as_slice).collect();
        let base = model.encode_outfit(&refs).unwrap();
        for _ in 0..5 {
            let mut perm = refs.clone();
            perm.shuffle(&mut rng);
            let e = model.encode_outfit(&perm).unwrap();
            for (a, b) in base.iter().zip(&e) {
                worst = worst.max((a - b).abs() as f64);
            }
        }
    }
    worst
}
