#![allow(dead_code)]

use outfitrank::diffcore::{ParamGrads, ParamStore, Tape, Tensor, Var};
use outfitrank::Result;
use rand::Rng;

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

/// Central differences of `f` at `x`.
pub fn numeric_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − n‖ / max(‖n‖, ‖a‖, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-8)
}

pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::matrix(rows, cols, random_vec(rng, rows * cols, 1.0)).unwrap()
}

/// Checks `build` (a graph over tape inputs of the given shapes) against central differences
/// of `⟨R, output⟩` for a random `R`. Returns the largest relative error over all inputs.
pub fn check_tape_op(
    rng: &mut impl Rng,
    inputs: Vec<Tensor<f64>>,
    build: &dyn Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
) -> f64 {
    let store = ParamStore::new();
    let run = |values: &[Tensor<f64>]| -> Tensor<f64> {
        let mut tape = Tape::new(&store);
        let vars: Vec<Var> = values.iter().map(|t| tape.input(t.clone())).collect();
        let out = build(&mut tape, &vars).expect("forward");
        tape.value(out).clone()
    };
    let out = run(&inputs);
    let weights = Tensor::new(out.shape().to_vec(), random_vec(rng, out.len(), 1.0)).unwrap();

    let mut tape = Tape::new(&store);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let o = build(&mut tape, &vars).expect("forward");
    let mut grads = ParamGrads::zeros_like(&store);
    let adj = tape.backward(o, weights.clone(), &mut grads).expect("backward");

    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = adj
            .get(*v)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        let mut f = |x: &[f64]| {
            let mut vals = inputs.clone();
            vals[k] = Tensor::new(inputs[k].shape().to_vec(), x.to_vec()).unwrap();
            run(&vals).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
        };
        let numeric = numeric_gradient(&mut f, inputs[k].data());
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}
pub mod gradcheck;
pub mod identities;
pub mod metric_oracle;
