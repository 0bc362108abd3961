use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::kernels::{self, LayerNormCache};
use super::{ParamGrads, ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax(Var, T),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        cache: LayerNormCache<T>,
    },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MeanRows(Var),
    SelectRow(Var, usize),
    Cosine(Var, Var),
}

struct Node<T> {
    // `None` for parameters, whose values stay in the store.
    value: Option<Tensor<T>>,
    op: Op<T>,
}

/// Reverse-mode recording of one forward pass.
///
/// Parameters are read in place from the borrowed [`ParamStore`]; their adjoints are
/// accumulated into a [`ParamGrads`] during [`Tape::backward`].
pub struct Tape<'p, T: Scalar> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

/// Adjoints of the leaf inputs after a backward pass.
pub struct Adjoints<T> {
    inputs: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Adjoints<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.inputs.get(var.0).and_then(Option::as_ref)
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        let node = &self.nodes[var.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(id)) => self.store.get(*id),
            (None, _) => unreachable!("only parameter nodes borrow their value"),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Degenerate("non-finite value produced on tape".into()));
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Input,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a parameter once per tape; repeated calls return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul_nt(self.value(a), self.value(b))?;
        self.push(out, Op::MatMulNt(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = kernels::transpose(self.value(a));
        self.push(out, Op::Transpose(a))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.len() != x.cols() {
            return Err(Error::Shape(format!("row of width {} added to {} columns", r.len(), x.cols())));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        let out = self.value(a).map(|v| v * factor);
        self.push(out, Op::Scale(a, factor))
    }

    /// Rectifier; the subgradient at zero is zero.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var, temperature: T) -> Result<Var> {
        let out = kernels::softmax_rows(self.value(a), temperature)?;
        self.push(out, Op::Softmax(a, temperature))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, epsilon: T) -> Result<Var> {
        let (out, cache) =
            kernels::layer_norm(self.value(x), self.value(gain), self.value(bias), epsilon)?;
        self.push(out, Op::LayerNorm { x, gain, bias, cache })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let rows = self.value(*first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::Shape("concat operands differ in row count".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if start >= end || end > x.cols() {
            return Err(Error::Shape(format!("column slice {start}..{end} of width {}", x.cols())));
        }
        let mut data = Vec::with_capacity(x.rows() * (end - start));
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row(r)[start..end]);
        }
        let out = Tensor::matrix(x.rows(), end - start, data)?;
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let n = T::lit(x.rows() as f64);
        let mut out = vec![T::zero(); x.cols()];
        for r in 0..x.rows() {
            for (o, &v) in out.iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= n);
        self.push(Tensor::row_vector(out), Op::MeanRows(a))
    }

    pub fn select_row(&mut self, a: Var, row: usize) -> Result<Var> {
        let x = self.value(a);
        if row >= x.rows() {
            return Err(Error::Lookup(format!("row {row} of {}", x.rows())));
        }
        let out = Tensor::row_vector(x.row(row).to_vec());
        self.push(out, Op::SelectRow(a, row))
    }

    /// Cosine similarity of two rows, recorded as a `1 × 1` tensor.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let c = kernels::cosine(self.value(a).data(), self.value(b).data())?;
        self.push(Tensor::matrix(1, 1, vec![c])?, Op::Cosine(a, b))
    }

    /// Propagates `seed` (the adjoint of `output`) back through every recorded node.
    ///
    /// Parameter adjoints are added into `grads`; adjoints of tape inputs are returned.
    pub fn backward(
        &self,
        output: Var,
        seed: Tensor<T>,
        grads: &mut ParamGrads<T>,
    ) -> Result<Adjoints<T>> {
        if !seed.same_shape(self.value(output)) {
            return Err(Error::Shape("backward seed shape differs from output".into()));
        }
        let mut adj: Vec<Option<Tensor<T>>> = Vec::with_capacity(output.0 + 1);
        adj.resize_with(output.0 + 1, || None);
        adj[output.0] = Some(seed);
        let mut inputs: Vec<Option<Tensor<T>>> = Vec::new();
        inputs.resize_with(output.0 + 1, || None);

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => inputs[i] = Some(g),
                Op::Param(id) => grads.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    accumulate(&mut adj, *a, kernels::matmul_nt(&g, self.value(*b))?);
                    match self.nodes[b.0].op {
                        // weight gradients go straight into the parameter buffer
                        Op::Param(id) => kernels::matmul_tn_accumulate(self.value(*a), &g, grads.get_mut(id))?,
                        _ => accumulate(&mut adj, *b, kernels::matmul_tn(self.value(*a), &g)?),
                    }
                }
                Op::MatMulNt(a, b) => {
                    // c = a bᵀ: ∂a = g b, ∂b = gᵀ a
                    let ga = kernels::matmul(&g, self.value(*b))?;
                    let gb = kernels::matmul_tn(&g, self.value(*a))?;
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut adj, *a, kernels::transpose(&g)),
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g);
                }
                Op::AddRow(a, row) => {
                    let mut gr = vec![T::zero(); g.cols()];
                    for r in 0..g.rows() {
                        for (s, &v) in gr.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    let shape = self.value(*row).shape().to_vec();
                    accumulate(&mut adj, *row, Tensor::new(shape, gr)?);
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&g, y, |p, q| p * q);
                    let gb = zip_map(&g, x, |p, q| p * q);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Scale(a, factor) => {
                    let f = *factor;
                    accumulate(&mut adj, *a, g.map(|v| v * f));
                }
                Op::Relu(a) => {
                    let y = self.nodes[i].value.as_ref().expect("relu output");
                    let ga = zip_map(&g, y, |p, q| if q > T::zero() { p } else { T::zero() });
                    accumulate(&mut adj, *a, ga);
                }
                Op::Softmax(a, t) => {
                    let y = self.nodes[i].value.as_ref().expect("softmax output");
                    accumulate(&mut adj, *a, kernels::softmax_rows_backward(y, &g, *t));
                }
                Op::LayerNorm { x, gain, bias, cache } => {
                    let (gx, ggain, gbias) =
                        kernels::layer_norm_backward(cache, self.value(*gain), &g);
                    accumulate(&mut adj, *x, gx);
                    accumulate(&mut adj, *gain, ggain);
                    accumulate(&mut adj, *bias, gbias);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut data = Vec::with_capacity(g.rows() * w);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        accumulate(&mut adj, p, Tensor::matrix(g.rows(), w, data)?);
                        offset += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(&[x.rows(), x.cols()]);
                    for r in 0..g.rows() {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let n = T::lit(x.rows() as f64);
                    let mut ga = Tensor::zeros(&[x.rows(), x.cols()]);
                    for r in 0..x.rows() {
                        for (o, &v) in ga.row_mut(r).iter_mut().zip(g.data()) {
                            *o = v / n;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::SelectRow(a, row) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.shape());
                    ga.row_mut(*row).copy_from_slice(g.data());
                    accumulate(&mut adj, *a, ga);
                }
                Op::Cosine(a, b) => {
                    let (ua, ub) = (self.value(*a), self.value(*b));
                    let (gu, gv) = kernels::cosine_backward(ua.data(), ub.data(), g.data()[0])?;
                    accumulate(&mut adj, *a, Tensor::new(ua.shape().to_vec(), gu)?);
                    accumulate(&mut adj, *b, Tensor::new(ub.shape().to_vec(), gv)?);
                }
            }
        }
        Ok(Adjoints { inputs })
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::new(b.shape().to_vec(), data).expect("zip of equal shapes")
}

fn accumulate<T: Scalar>(adj: &mut [Option<Tensor<T>>], var: Var, grad: Tensor<T>) {
    match &mut adj[var.0] {
        Some(existing) => existing.add_assign(&grad),
        slot @ None => *slot = Some(grad),
    }
}
