//! Training objectives over preference scores and projected outfit views.
//!
//! Every loss returns its value together with the gradient with respect to its score inputs;
//! callers chain those into the encoder tapes.

mod cache;

pub use cache::TeacherCache;

use crate::diffcore::{cosine, cosine_backward};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig<T> {
    pub tau_fnd: T,
    pub tau_cl: T,
    pub alpha: T,
    pub lambda: T,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        LossConfig {
            tau_fnd: T::lit(0.1),
            tau_cl: T::lit(0.1),
            alpha: T::lit(1.25),
            lambda: T::lit(0.2),
        }
    }
}

impl<T: Scalar> LossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        check_temperature(self.tau_fnd, "tau_fnd")?;
        check_temperature(self.tau_cl, "tau_cl")?;
        if !(self.alpha > T::zero()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.lambda >= T::zero()) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        Ok(())
    }
}

fn check_temperature<T: Scalar>(tau: T, name: &str) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::Config(format!("{name} must be positive, got {tau}")));
    }
    Ok(())
}

/// Loss value with gradients w.r.t. the positive score of each pair and each of its negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreLoss<T> {
    pub value: T,
    pub grad_pos: Vec<T>,
    pub grad_neg: Vec<Vec<T>>,
}

// Mean written relative to the first term so that equal terms average to exactly that term.
fn batch_mean<T: Scalar>(terms: &[T]) -> T {
    let first = terms[0];
    let n = T::lit(terms.len() as f64);
    first + terms.iter().map(|&t| t - first).sum::<T>() / n
}

fn check_batch<T>(pos: &[T], neg: &[Vec<T>], signals: Option<&[Vec<T>]>) -> Result<()> {
    if pos.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    if pos.len() != neg.len() {
        return Err(Error::Shape(format!(
            "{} positive scores but {} negative lists",
            pos.len(),
            neg.len()
        )));
    }
    if let Some(sig) = signals {
        if sig.len() != neg.len() || sig.iter().zip(neg).any(|(s, n)| s.len() != n.len()) {
            return Err(Error::Shape("signals are not aligned with negatives".into()));
        }
    }
    Ok(())
}

/// Mean over pairs of `−log σ((r⁺ − r⁻)/τ)`.
pub fn bpr_loss<T: Scalar>(pos: &[T], neg: &[T], tau: T) -> Result<ScoreLoss<T>> {
    check_temperature(tau, "temperature")?;
    if pos.is_empty() || pos.len() != neg.len() {
        return Err(Error::Shape(format!(
            "bpr needs equal nonempty score lists, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    let n = T::lit(pos.len() as f64);
    let mut terms = Vec::with_capacity(pos.len());
    let mut grad_pos = Vec::with_capacity(pos.len());
    let mut grad_neg = Vec::with_capacity(pos.len());
    for (&p, &q) in pos.iter().zip(neg) {
        let x = (p - q) / tau;
        // softplus(−x), written to avoid overflow for either sign
        let term = if x > T::zero() {
            (-x).exp().ln_1p()
        } else {
            -x + x.exp().ln_1p()
        };
        terms.push(term);
        let sig_neg = T::one() / (T::one() + x.exp()); // σ(−x)
        grad_pos.push(-sig_neg / tau / n);
        grad_neg.push(vec![sig_neg / tau / n]);
    }
    Ok(ScoreLoss {
        value: batch_mean(&terms),
        grad_pos,
        grad_neg,
    })
}

/// Temperature-scaled cross-entropy of each positive against its negatives, averaged over pairs.
pub fn npair_loss<T: Scalar>(pos: &[T], neg: &[Vec<T>], tau: T) -> Result<ScoreLoss<T>> {
    check_temperature(tau, "tau_fnd")?;
    check_batch(pos, neg, None)?;
    let n = T::lit(pos.len() as f64);
    let mut terms = Vec::with_capacity(pos.len());
    let mut grad_pos = Vec::with_capacity(pos.len());
    let mut grad_neg = Vec::with_capacity(pos.len());
    for (&rp, negs) in pos.iter().zip(neg) {
        let a = rp / tau;
        let logits: Vec<T> = negs.iter().map(|&r| r / tau).collect();
        let (term, p_pos, p_neg) = softmax_term(a, &logits);
        terms.push(term);
        grad_pos.push((p_pos - T::one()) / tau / n);
        grad_neg.push(p_neg.iter().map(|&p| p / tau / n).collect());
    }
    Ok(ScoreLoss {
        value: batch_mean(&terms),
        grad_pos,
        grad_neg,
    })
}

/// N-pair loss with every negative exponent scaled by its signed false-negativeness.
///
/// A negative with `d > 0` is pushed away from the user, one with `d < 0` is pulled in, and
/// `d = 0` removes it from the gradient.
pub fn fnd_loss<T: Scalar>(pos: &[T], neg: &[Vec<T>], signals: &[Vec<T>], tau: T) -> Result<ScoreLoss<T>> {
    check_temperature(tau, "tau_fnd")?;
    check_batch(pos, neg, Some(signals))?;
    let n = T::lit(pos.len() as f64);
    let mut terms = Vec::with_capacity(pos.len());
    let mut grad_pos = Vec::with_capacity(pos.len());
    let mut grad_neg = Vec::with_capacity(pos.len());
    for ((&rp, negs), sig) in pos.iter().zip(neg).zip(signals) {
        let a = rp / tau;
        let logits: Vec<T> = negs.iter().zip(sig).map(|(&r, &d)| d * r / tau).collect();
        let (term, p_pos, p_neg) = softmax_term(a, &logits);
        terms.push(term);
        grad_pos.push((p_pos - T::one()) / tau / n);
        grad_neg.push(p_neg.iter().zip(sig).map(|(&p, &d)| d * p / tau / n).collect());
    }
    Ok(ScoreLoss {
        value: batch_mean(&terms),
        grad_pos,
        grad_neg,
    })
}

/// `−log(eᵃ / (eᵃ + Σ e^{bₖ}))` with the softmax probabilities of every logit.
fn softmax_term<T: Scalar>(a: T, others: &[T]) -> (T, T, Vec<T>) {
    let max = others.iter().copied().fold(a, T::max);
    let e_pos = (a - max).exp();
    let e_neg: Vec<T> = others.iter().map(|&b| (b - max).exp()).collect();
    let total = e_pos + e_neg.iter().copied().sum::<T>();
    let term = (max - a) + total.ln();
    let p_neg = e_neg.iter().map(|&e| e / total).collect();
    (term, e_pos / total, p_neg)
}

/// Per-pair FND probability `p(r_k)` and the analytic derivative `(d_k/τ)·p(r_k)` of the
/// single-pair loss with respect to each negative score.
pub fn fnd_pair_gradient<T: Scalar>(pos: T, neg: &[T], signals: &[T], tau: T) -> Result<(Vec<T>, Vec<T>)> {
    check_temperature(tau, "tau_fnd")?;
    if neg.len() != signals.len() {
        return Err(Error::Shape("signals are not aligned with negatives".into()));
    }
    let logits: Vec<T> = neg.iter().zip(signals).map(|(&r, &d)| d * r / tau).collect();
    let (_, _, p) = softmax_term(pos / tau, &logits);
    let grads = p.iter().zip(signals).map(|(&pk, &d)| d / tau * pk).collect();
    Ok((p, grads))
}

/// Contrastive loss over `2N` projected views where views `2n` and `2n+1` come from outfit `n`.
///
/// Returns the loss and its gradient with respect to every view vector.
pub fn cl_loss<T: Scalar>(views: &[Vec<T>], tau: T) -> Result<(T, Vec<Vec<T>>)> {
    check_temperature(tau, "tau_cl")?;
    if views.is_empty() || views.len() % 2 != 0 {
        return Err(Error::Input(format!(
            "contrastive loss needs an even, nonzero number of views, got {}",
            views.len()
        )));
    }
    let m = views.len();
    let mut sim = vec![T::zero(); m * m];
    for i in 0..m {
        for j in i + 1..m {
            let s = cosine(&views[i], &views[j])?;
            sim[i * m + j] = s;
            sim[j * m + i] = s;
        }
    }
    let count = T::lit(m as f64);
    let mut terms = Vec::with_capacity(m);
    // gradient of the loss w.r.t. each unordered similarity s_ij (stored at [i*m+j], i<j)
    let mut dsim = vec![T::zero(); m * m];
    for anchor in 0..m {
        let partner = anchor ^ 1;
        let candidates: Vec<usize> = (0..m).filter(|&t| t != anchor).collect();
        let logits: Vec<T> = candidates.iter().map(|&t| sim[anchor * m + t] / tau).collect();
        let a = sim[anchor * m + partner] / tau;
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        terms.push((max - a) + total.ln());
        for (&t, &e) in candidates.iter().zip(&exps) {
            let mut g = e / total / tau;
            if t == partner {
                g -= T::one() / tau;
            }
            let (lo, hi) = (anchor.min(t), anchor.max(t));
            dsim[lo * m + hi] += g / count;
        }
    }
    let value = batch_mean(&terms);
    let d = views[0].len();
    let mut grads = vec![vec![T::zero(); d]; m];
    for i in 0..m {
        for j in i + 1..m {
            let g = dsim[i * m + j];
            if g == T::zero() {
                continue;
            }
            let (gi, gj) = cosine_backward(&views[i], &views[j], g)?;
            for (acc, v) in grads[i].iter_mut().zip(gi) {
                *acc += v;
            }
            for (acc, v) in grads[j].iter_mut().zip(gj) {
                *acc += v;
            }
        }
    }
    Ok((value, grads))
}

/// `fnd + λ·cl`.
pub fn fnd_cl_loss<T: Scalar>(fnd: T, cl: T, lambda: T) -> Result<T> {
    if !(lambda >= T::zero()) {
        return Err(Error::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(fnd + lambda * cl)
}
