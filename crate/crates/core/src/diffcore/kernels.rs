//! Forward kernels and their vector-Jacobian products.
//!
//! Every differentiable operation used by the encoder and the losses lives here as a pair of
//! plain functions; the tape only sequences them.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Denominator guard shared by layer norm and cosine.
pub const NORM_EPSILON: f64 = 1e-5;

fn check_inner(a: &str, ad: usize, b: &str, bd: usize) -> Result<()> {
    if ad != bd {
        return Err(Error::Shape(format!(
            "inner dimensions disagree: {a} has {ad}, {b} has {bd}"
        )));
    }
    Ok(())
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    check_inner("lhs", k, "rhs", b.rows())?;
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(m, n, out)
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    check_inner("lhs", k, "rhsᵀ", b.cols())?;
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            out.push(dot(arow, b.row(j)));
        }
    }
    Tensor::matrix(m, n, out)
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut out = Tensor::zeros(&[a.cols(), b.cols()]);
    matmul_tn_accumulate(a, b, &mut out)?;
    Ok(out)
}

/// `out += aᵀ · b`; `out` must already be `a.cols() × b.cols()` in element count.
pub fn matmul_tn_accumulate<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, out: &mut Tensor<T>) -> Result<()> {
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    check_inner("lhsᵀ", k, "rhs", b.rows())?;
    if out.len() != m * n {
        return Err(Error::Shape(format!("accumulator holds {} values, product has {}", out.len(), m * n)));
    }
    let out = out.data_mut();
    for p in 0..k {
        let arow = a.row(p);
        let brow = b.row(p);
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(())
}

pub fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((matmul_nt(grad, b)?, matmul_tn(a, grad)?))
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let (r, c) = (a.rows(), a.cols());
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.data()[i * c + j];
        }
    }
    Tensor::matrix(c, r, out).expect("transpose preserves size")
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let n = a.len().min(b.len());
    let (head, tail) = (n - n % LANES, n % LANES);
    let mut acc = [T::zero(); LANES];
    for (ca, cb) in a[..head].chunks_exact(LANES).zip(b[..head].chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut total = acc.iter().copied().sum::<T>();
    for i in head..head + tail {
        total += a[i] * b[i];
    }
    total
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn check_temperature<T: Scalar>(temperature: T) -> Result<()> {
    if !(temperature > T::zero()) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(())
}

/// Row-wise `softmax(x / temperature)` with max subtraction.
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>, temperature: T) -> Result<Tensor<T>> {
    check_temperature(temperature)?;
    let mut out = x.clone();
    for r in 0..x.rows() {
        softmax_in_place(out.row_mut(r), temperature);
    }
    Ok(out)
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T], temperature: T) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = ((*v - max) / temperature).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Given softmax output `y` and upstream `grad`, returns the input adjoint.
pub fn softmax_rows_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>, temperature: T) -> Tensor<T> {
    let mut out = Tensor::zeros(&[y.rows(), y.cols()]);
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), grad.row(r));
        let inner = dot(yr, gr);
        for ((o, &yv), &gv) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - inner) / temperature;
        }
    }
    out
}

/// Per-row statistics kept from the forward pass of [`layer_norm`].
#[derive(Clone, Debug)]
pub struct LayerNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
}

pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    epsilon: T,
) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    if !(epsilon > T::zero()) {
        return Err(Error::Parameter(format!("layer norm epsilon must be positive, got {epsilon}")));
    }
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::Shape(format!(
            "layer norm over width {d} with gain {} and bias {}",
            gain.len(),
            bias.len()
        )));
    }
    let width = T::lit(d as f64);
    let mut normalized = x.clone();
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() / width;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / width;
        let istd = T::one() / (var + epsilon).sqrt();
        inv_std.push(istd);
        let nrow = normalized.row_mut(r);
        for (n, &v) in nrow.iter_mut().zip(row) {
            *n = (v - mean) * istd;
        }
        let nrow = normalized.row(r);
        for (((o, &n), &g), &b) in out.row_mut(r).iter_mut().zip(nrow).zip(gain.data()).zip(bias.data()) {
            *o = n * g + b;
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Returns adjoints for `(x, gain, bias)`.
pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gain: &Tensor<T>,
    grad: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (rows, d) = (grad.rows(), grad.cols());
    let width = T::lit(d as f64);
    let mut gx = Tensor::zeros(&[rows, d]);
    let mut ggain = Tensor::zeros(gain.shape());
    let mut gbias = Tensor::zeros(gain.shape());
    let mut scaled = vec![T::zero(); d];
    for r in 0..rows {
        let (n, g) = (cache.normalized.row(r), grad.row(r));
        for j in 0..d {
            ggain.data_mut()[j] += g[j] * n[j];
            gbias.data_mut()[j] += g[j];
            scaled[j] = g[j] * gain.data()[j];
        }
        let mean_s = scaled.iter().copied().sum::<T>() / width;
        let mean_sn = dot(&scaled, n) / width;
        let istd = cache.inv_std[r];
        for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
            *o = istd * (scaled[j] - mean_s - n[j] * mean_sn);
        }
    }
    (gx, ggain, gbias)
}

fn checked_norm<T: Scalar>(v: &[T], which: &str) -> Result<T> {
    let n = norm(v);
    if !n.is_finite() || n <= T::lit(NORM_EPSILON) {
        return Err(Error::Degenerate(format!("cosine of a zero-norm {which} vector")));
    }
    Ok(n)
}

/// Cosine similarity; vectors with norm at or below [`NORM_EPSILON`] are rejected.
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine of lengths {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (checked_norm(u, "left")?, checked_norm(v, "right")?);
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Gradient of `cosine(u, v)` scaled by `grad`: returns `(∂/∂u, ∂/∂v)`.
pub fn cosine_backward<T: Scalar>(u: &[T], v: &[T], grad: T) -> Result<(Vec<T>, Vec<T>)> {
    let (nu, nv) = (checked_norm(u, "left")?, checked_norm(v, "right")?);
    let c = dot(u, v) / (nu * nv);
    let inv = T::one() / (nu * nv);
    let gu = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| grad * (b * inv - c * a / (nu * nu)))
        .collect();
    let gv = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| grad * (a * inv - c * b / (nv * nv)))
        .collect();
    Ok((gu, gv))
}
