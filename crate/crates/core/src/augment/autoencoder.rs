use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{ParamGrads, ParamStore, SgdMomentum, Tape, Tensor, Var};
use crate::encoder::LinearParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderConfig {
    pub latent: usize,
    /// Relu after the encoder layer; `false` gives a purely linear autoencoder.
    pub relu: bool,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Share of items held out to measure reconstruction.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            latent: 32,
            relu: true,
            epochs: 30,
            lr: 0.02,
            momentum: 0.9,
            batch_size: 32,
            holdout: 0.1,
            seed: 0,
        }
    }
}

/// `x ↦ dec(act(enc(x)))` with a linear decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder<T> {
    pub store: ParamStore<T>,
    pub encoder: LinearParams,
    pub decoder: LinearParams,
    pub relu: bool,
    d_in: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderReport {
    pub holdout_mse_initial: f64,
    pub holdout_mse_final: f64,
    /// Mean training reconstruction error of each epoch.
    pub train_mse: Vec<f64>,
}

fn rows_tensor<T: Scalar>(rows: &[&[T]]) -> Result<Tensor<T>> {
    let cols = rows.first().map_or(0, |r| r.len());
    Tensor::matrix(rows.len(), cols, rows.iter().flat_map(|r| r.iter().copied()).collect())
}

impl<T: Scalar> Autoencoder<T> {
    pub fn new(d_in: usize, latent: usize, relu: bool, seed: u64) -> Result<Self> {
        if d_in == 0 || latent == 0 {
            return Err(Error::Config("autoencoder dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut linear = |name: &str, fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
            LinearParams {
                weight: store.add(format!("{name}.w"), Tensor::matrix(fan_in, fan_out, w).expect("sized")),
                bias: store.add(format!("{name}.b"), Tensor::zeros(&[1, fan_out])),
            }
        };
        let encoder = linear("ae.enc", d_in, latent);
        let decoder = linear("ae.dec", latent, d_in);
        Ok(Autoencoder {
            store,
            encoder,
            decoder,
            relu,
            d_in,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn latent_dim(&self) -> usize {
        self.store.get(self.encoder.weight).cols()
    }

    fn linear_on(tape: &mut Tape<'_, T>, x: Var, p: &LinearParams) -> Result<Var> {
        let w = tape.param(p.weight);
        let b = tape.param(p.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }

    fn encode_on(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let h = Self::linear_on(tape, x, &self.encoder)?;
        if self.relu {
            tape.relu(h)
        } else {
            Ok(h)
        }
    }

    /// Latent rows for `items`.
    pub fn encode(&self, items: &[&[T]]) -> Result<Tensor<T>> {
        self.check(items)?;
        let mut tape = Tape::new(&self.store);
        let x = tape.input(rows_tensor(items)?);
        let z = self.encode_on(&mut tape, x)?;
        Ok(tape.value(z).clone())
    }

    pub fn reconstruct(&self, items: &[&[T]]) -> Result<Tensor<T>> {
        self.check(items)?;
        let mut tape = Tape::new(&self.store);
        let x = tape.input(rows_tensor(items)?);
        let z = self.encode_on(&mut tape, x)?;
        let r = Self::linear_on(&mut tape, z, &self.decoder)?;
        Ok(tape.value(r).clone())
    }

    /// Mean squared reconstruction error over all entries.
    pub fn mse(&self, items: &[&[T]]) -> Result<f64> {
        if items.is_empty() {
            return Err(Error::Input("no items to reconstruct".into()));
        }
        let r = self.reconstruct(items)?;
        let x = rows_tensor(items)?;
        let sq: f64 = r
            .data()
            .iter()
            .zip(x.data())
            .map(|(&a, &b)| (a - b).as_f64().powi(2))
            .sum();
        Ok(sq / r.len() as f64)
    }

    /// Loss and gradient of the batch MSE.
    fn loss_and_grads(&self, items: &[&[T]], grads: &mut ParamGrads<T>) -> Result<f64> {
        let mut tape = Tape::new(&self.store);
        let x = tape.input(rows_tensor(items)?);
        let z = self.encode_on(&mut tape, x)?;
        let r = Self::linear_on(&mut tape, z, &self.decoder)?;
        let recon = tape.value(r);
        let inputs = tape.value(x);
        let scale = T::lit(2.0 / recon.len() as f64);
        let mut loss = 0.0;
        let seed = recon.data().iter().zip(inputs.data()).map(|(&a, &b)| {
            let diff = a - b;
            loss += diff.as_f64().powi(2);
            scale * diff
        });
        let seed = Tensor::new(recon.shape().to_vec(), seed.collect())?;
        let loss = loss / recon.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence("autoencoder loss is not finite".into()));
        }
        tape.backward(r, seed, grads)?;
        Ok(loss)
    }

    fn check(&self, items: &[&[T]]) -> Result<()> {
        if let Some(bad) = items.iter().find(|r| r.len() != self.d_in) {
            return Err(Error::Shape(format!("item of length {} where d_in = {}", bad.len(), self.d_in)));
        }
        Ok(())
    }
}

/// Trains on minibatches with SGD and momentum, holding out a share of items for evaluation.
pub fn train_autoencoder<T: Scalar>(
    items: &[&[T]],
    cfg: &AutoencoderConfig,
) -> Result<(Autoencoder<T>, AutoencoderReport)> {
    if items.is_empty() {
        return Err(Error::Input("autoencoder needs at least one item".into()));
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.holdout) {
        return Err(Error::Config("autoencoder batch size must be positive and holdout in [0, 1)".into()));
    }
    let d_in = items[0].len();
    let mut model = Autoencoder::new(d_in, cfg.latent, cfg.relu, cfg.seed)?;
    model.check(items)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a17e);
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((items.len() as f64) * cfg.holdout).round() as usize;
    let n_hold = n_hold.min(items.len() - 1);
    let holdout: Vec<&[T]> = order[..n_hold].iter().map(|&i| items[i]).collect();
    let mut train: Vec<usize> = order[n_hold..].to_vec();
    // with nothing held out, measure on the training items
    let measure: Vec<&[T]> = if holdout.is_empty() {
        train.iter().map(|&i| items[i]).collect()
    } else {
        holdout
    };
    let holdout_mse_initial = model.mse(&measure)?;

    let mut opt = SgdMomentum::new(&model.store, T::lit(cfg.lr), T::lit(cfg.momentum))?;
    let mut grads = ParamGrads::zeros_like(&model.store);
    let mut train_mse = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train.chunks(cfg.batch_size) {
            let batch: Vec<&[T]> = chunk.iter().map(|&i| items[i]).collect();
            grads.clear();
            total += model.loss_and_grads(&batch, &mut grads)? * batch.len() as f64;
            opt.step(&mut model.store, &grads)?;
        }
        train_mse.push(total / train.len() as f64);
    }
    let holdout_mse_final = model.mse(&measure)?;
    if !holdout_mse_final.is_finite() {
        return Err(Error::Divergence("autoencoder reconstruction is not finite".into()));
    }
    Ok((
        model,
        AutoencoderReport {
            holdout_mse_initial,
            holdout_mse_final,
            train_mse,
        },
    ))
}
