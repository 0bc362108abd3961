//! Dense tensors, a reverse-mode tape over the handful of operations the encoder needs, and
//! SGD with momentum.

pub mod kernels;
mod optim;
mod params;
mod tape;
mod tensor;

pub use kernels::{cosine, cosine_backward, NORM_EPSILON};
pub use optim::{sgd_momentum_step, SgdMomentum};
pub use params::{NamedParam, ParamGrads, ParamId, ParamStore};
pub use tape::{Adjoints, Tape, Var};
pub use tensor::Tensor;
