//! Finite-difference sweep over every tape operation, the encoder and every loss, at f64.

use outfitrank::diffcore::{cosine, cosine_backward, ParamGrads, Tape, Tensor, Var};
use outfitrank::encoder::{EncoderConfig, ModelParams, Tier};
use outfitrank::objectives::{bpr_loss, cl_loss, fnd_loss, npair_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_tape_op, numeric_gradient, random_tensor, random_vec, relative_error};

pub const INSTANCES: usize = 20;

#[derive(Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
}

type Build = fn(&mut Tape<'_, f64>, &[Var]) -> outfitrank::Result<Var>;

fn op(rng: &mut ChaCha8Rng, name: &'static str, shapes: &dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>, build: Build) -> CheckResult {
    let worst = (0..INSTANCES)
        .map(|_| {
            let inputs = shapes(rng);
            check_tape_op(rng, inputs, &build)
        })
        .fold(0.0, f64::max);
    CheckResult { name, instances: INSTANCES, worst }
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5))
}

/// Entries kept away from the relu kink.
fn off_kink(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    let data = (0..r * c)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::matrix(r, c, data).unwrap()
}

fn tape_ops(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    vec![
        op(rng, "matmul", &|r| { let (m, k, n) = dims(r); vec![random_tensor(r, m, k), random_tensor(r, k, n)] }, |t, v| t.matmul(v[0], v[1])),
        op(rng, "matmul_nt", &|r| { let (m, k, n) = dims(r); vec![random_tensor(r, m, k), random_tensor(r, n, k)] }, |t, v| t.matmul_nt(v[0], v[1])),
        op(rng, "transpose", &|r| { let (m, k, _) = dims(r); vec![random_tensor(r, m, k)] }, |t, v| t.transpose(v[0])),
        op(rng, "add", &|r| { let (m, k, _) = dims(r); vec![random_tensor(r, m, k), random_tensor(r, m, k)] }, |t, v| t.add(v[0], v[1])),
        op(rng, "add_row", &|r| { let (m, k, _) = dims(r); vec![random_tensor(r, m, k), random_tensor(r, 1, k)] }, |t, v| t.add_row(v[0], v[1])),
        op(rng, "mul", &|r| { let (m, k, _) = dims(r); vec![random_tensor(r, m, k), random_tensor(r, m, k)] }, |t, v| t.mul(v[0], v[1])),
        op(rng, "scale", &|r| { let (m, k, _) = dims(r); vec![random_tensor(r, m, k)] }, |t, v| t.scale(v[0], -1.7)),
        op(rng, "relu", &|r| { let (m, k, _) = dims(r); vec![off_kink(r, m, k)] }, |t, v| t.relu(v[0])),
        op(rng, "softmax_rows", &|r| { let (m, k, _) = dims(r); vec![random_tensor(r, m, k + 1)] }, |t, v| t.softmax_rows(v[0], 0.7)),
        op(
            rng,
            "layer_norm",
            &|r| {
                let (m, k, _) = dims(r);
                vec![random_tensor(r, m, k + 1), Tensor::vector(random_vec(r, k + 1, 1.5)), Tensor::vector(random_vec(r, k + 1, 1.0))]
            },
            |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5),
        ),
        op(rng, "concat_cols", &|r| { let (m, k, n) = dims(r); vec![random_tensor(r, m, k), random_tensor(r, m, n), random_tensor(r, m, 2)] }, |t, v| t.concat_cols(v)),
        op(rng, "slice_cols", &|r| { let (m, _, _) = dims(r); vec![random_tensor(r, m, 5)] }, |t, v| t.slice_cols(v[0], 1, 4)),
        op(rng, "mean_rows", &|r| { let (m, k, _) = dims(r); vec![random_tensor(r, m, k)] }, |t, v| t.mean_rows(v[0])),
        op(rng, "select_row", &|r| { let (_, k, _) = dims(r); vec![random_tensor(r, 3, k)] }, |t, v| t.select_row(v[0], 1)),
        op(rng, "cosine", &|r| { let (_, k, _) = dims(r); vec![random_tensor(r, 1, k + 1), random_tensor(r, 1, k + 1)] }, |t, v| t.cosine(v[0], v[1])),
    ]
}

fn cosine_kernel(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let n = rng.random_range(2..9);
        let (u, v) = (random_vec(rng, n, 1.0), random_vec(rng, n, 1.0));
        let g = rng.random_range(-2.0..2.0);
        let (gu, gv) = cosine_backward(&u, &v, g).unwrap();
        let nu = numeric_gradient(&mut |x| g * cosine(x, &v).unwrap(), &u);
        let nv = numeric_gradient(&mut |x| g * cosine(&u, x).unwrap(), &v);
        worst = worst.max(relative_error(&gu, &nu)).max(relative_error(&gv, &nv));
    }
    CheckResult { name: "cosine_backward", instances: INSTANCES, worst }
}

/// Encoder plus projection head and a user score, checked on a random subset of parameters.
fn encoder(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for inst in 0..INSTANCES {
        let d_in = rng.random_range(2..6);
        let mut cfg = EncoderConfig::new(d_in, 3, Tier::StudentXs);
        cfg.d = 8;
        cfg.heads = if inst % 2 == 0 { 2 } else { 4 };
        let model = ModelParams::<f64>::new(cfg, inst as u64).unwrap();
        let n = rng.random_range(1..5);
        let items: Vec<Vec<f64>> = (0..n).map(|_| random_vec(rng, d_in, 1.0)).collect();
        let user = rng.random_range(0..3);
        let project = inst % 3 == 0;
        let seed = random_vec(rng, if project { 8 } else { 1 }, 1.0);

        let forward = |m: &ModelParams<f64>| -> f64 {
            let refs: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
            let mut tape = Tape::new(&m.store);
            let o = m.encode_outfit_on(&mut tape, &refs).unwrap();
            let out = if project { m.project_on(&mut tape, o).unwrap() } else { m.score_on(&mut tape, user, o).unwrap() };
            tape.value(out).data().iter().zip(&seed).map(|(a, b)| a * b).sum()
        };
        let refs: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
        let mut tape = Tape::new(&model.store);
        let o = model.encode_outfit_on(&mut tape, &refs).unwrap();
        let out = if project { model.project_on(&mut tape, o).unwrap() } else { model.score_on(&mut tape, user, o).unwrap() };
        let mut grads = ParamGrads::zeros_like(&model.store);
        let shape = tape.value(out).shape().to_vec();
        tape.backward(out, Tensor::new(shape, seed.clone()).unwrap(), &mut grads).unwrap();

        // 60 distinct random coordinates across all parameters
        let ids: Vec<_> = model.store.ids().collect();
        let mut coords: Vec<(usize, usize)> = Vec::new();
        while coords.len() < 60 {
            let p = rng.random_range(0..ids.len());
            let c = (p, rng.random_range(0..model.store.get(ids[p]).len()));
            if !coords.contains(&c) {
                coords.push(c);
            }
        }
        let analytic: Vec<f64> = coords.iter().map(|&(p, j)| grads.get(ids[p]).data()[j]).collect();
        let base: Vec<f64> = coords.iter().map(|&(p, j)| model.store.get(ids[p]).data()[j]).collect();
        let mut f = |x: &[f64]| {
            let mut m = model.clone();
            for (&(p, j), &v) in coords.iter().zip(x) {
                m.store.get_mut(ids[p]).data_mut()[j] = v;
            }
            forward(&m)
        };
        let numeric = numeric_gradient(&mut f, &base);
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    CheckResult { name: "encoder+projection+score", instances: INSTANCES, worst }
}

fn scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    random_vec(rng, n, 1.0)
}

fn flatten(pos: &[f64], neg: &[Vec<f64>]) -> Vec<f64> {
    pos.iter().copied().chain(neg.iter().flatten().copied()).collect()
}

fn unflatten(x: &[f64], b: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    (x[..b].to_vec(), x[b..].chunks(k).map(<[f64]>::to_vec).collect())
}

fn losses(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let (mut w_bpr, mut w_np, mut w_fnd, mut w_cl) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..INSTANCES {
        let b = rng.random_range(1..5);
        let k = rng.random_range(1..6);
        let tau = rng.random_range(0.2..1.0);

        let (p, q) = (scores(rng, b), scores(rng, b));
        let l = bpr_loss(&p, &q, tau).unwrap();
        let x: Vec<f64> = p.iter().chain(&q).copied().collect();
        let num = numeric_gradient(&mut |x| bpr_loss(&x[..b], &x[b..], tau).unwrap().value, &x);
        let ana: Vec<f64> = l.grad_pos.iter().copied().chain(l.grad_neg.iter().map(|g| g[0])).collect();
        w_bpr = w_bpr.max(relative_error(&ana, &num));

        let pos = scores(rng, b);
        let neg: Vec<Vec<f64>> = (0..b).map(|_| scores(rng, k)).collect();
        let l = npair_loss(&pos, &neg, tau).unwrap();
        let num = numeric_gradient(
            &mut |x| {
                let (p, n) = unflatten(x, b, k);
                npair_loss(&p, &n, tau).unwrap().value
            },
            &flatten(&pos, &neg),
        );
        w_np = w_np.max(relative_error(&flatten(&l.grad_pos, &l.grad_neg), &num));

        let sig: Vec<Vec<f64>> = (0..b).map(|_| random_vec(rng, k, 2.0)).collect();
        let l = fnd_loss(&pos, &neg, &sig, tau).unwrap();
        let num = numeric_gradient(
            &mut |x| {
                let (p, n) = unflatten(x, b, k);
                fnd_loss(&p, &n, &sig, tau).unwrap().value
            },
            &flatten(&pos, &neg),
        );
        w_fnd = w_fnd.max(relative_error(&flatten(&l.grad_pos, &l.grad_neg), &num));

        let d = rng.random_range(2..6);
        let views: Vec<Vec<f64>> = (0..2 * b).map(|_| random_vec(rng, d, 1.0)).collect();
        let (_, g) = cl_loss(&views, tau).unwrap();
        let flat: Vec<f64> = views.iter().flatten().copied().collect();
        let num = numeric_gradient(
            &mut |x| {
                let v: Vec<Vec<f64>> = x.chunks(d).map(<[f64]>::to_vec).collect();
                cl_loss(&v, tau).unwrap().0
            },
            &flat,
        );
        let ana: Vec<f64> = g.iter().flatten().copied().collect();
        w_cl = w_cl.max(relative_error(&ana, &num));
    }
    for (name, worst) in [("bpr_loss", w_bpr), ("npair_loss", w_np), ("fnd_loss", w_fnd), ("cl_loss", w_cl)] {
        out.push(CheckResult { name, instances: INSTANCES, worst });
    }
    out
}

/// Every check, reproducible from `seed`.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = tape_ops(&mut rng);
    out.push(cosine_kernel(&mut rng));
    out.push(encoder(&mut rng));
    out.extend(losses(&mut rng));
    out
}
