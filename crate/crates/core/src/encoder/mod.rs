//! Item-feature encoder, set-attention outfit encoder, user embeddings and the cosine scorer.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{cosine, ParamId, ParamStore, Tape, Tensor, Var, NORM_EPSILON};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

/// Width tier of the item-feature encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tier {
    TeacherLarge,
    StudentXs,
    StudentS,
    StudentM,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::TeacherLarge, Tier::StudentXs, Tier::StudentS, Tier::StudentM];

    /// Hidden width of the two-layer item encoder.
    pub fn item_width(self) -> usize {
        match self {
            Tier::TeacherLarge => 512,
            Tier::StudentXs => 32,
            Tier::StudentS => 64,
            Tier::StudentM => 128,
        }
    }

    pub fn is_teacher(self) -> bool {
        self == Tier::TeacherLarge
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Tier::TeacherLarge => 0,
            Tier::StudentXs => 1,
            Tier::StudentS => 2,
            Tier::StudentM => 3,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        Tier::ALL.into_iter().find(|t| t.code() == code)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::TeacherLarge => "teacher-large",
            Tier::StudentXs => "student-xs",
            Tier::StudentS => "student-s",
            Tier::StudentM => "student-m",
        })
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "teacher-large" | "teacher" | "large" => Ok(Tier::TeacherLarge),
            "student-xs" | "xs" => Ok(Tier::StudentXs),
            "student-s" | "s" => Ok(Tier::StudentS),
            "student-m" | "m" => Ok(Tier::StudentM),
            other => Err(Error::Config(format!("unknown tier `{other}`"))),
        }
    }
}

/// Architecture hyper-parameters; everything a checkpoint header records.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub d_in: usize,
    pub d: usize,
    pub heads: usize,
    pub tier: Tier,
    pub sab_count: usize,
    pub user_count: usize,
    pub max_outfit_size: usize,
}

impl EncoderConfig {
    pub fn new(d_in: usize, user_count: usize, tier: Tier) -> Self {
        EncoderConfig {
            d_in,
            d: 128,
            heads: 8,
            tier,
            sab_count: 2,
            user_count,
            max_outfit_size: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_in == 0 || self.heads == 0 {
            return Err(Error::Config("dimensions and head count must be positive".into()));
        }
        if self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "head count {} does not divide d = {}",
                self.heads, self.d
            )));
        }
        if self.max_outfit_size == 0 {
            return Err(Error::Config("max outfit size must be positive".into()));
        }
        Ok(())
    }

    /// Width of the row-wise feed-forward hidden layer.
    pub fn ff_width(&self) -> usize {
        2 * self.d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// `relu(x W₁ + b₁) W₂ + b₂`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeedForwardParams {
    pub hidden: LinearParams,
    pub out: LinearParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

/// Multi-head attention projections.
///
/// Each projection is stored as one `d × d` matrix whose column block
/// `[i·d/h, (i+1)·d/h)` is the per-head matrix of head `i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiHeadAttentionParams {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub output: ParamId,
    pub heads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SabParams {
    pub attention: MultiHeadAttentionParams,
    pub feed_forward: FeedForwardParams,
    pub norm_attention: LayerNormParams,
    pub norm_output: LayerNormParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolingParams {
    pub seed: ParamId,
    pub attention: MultiHeadAttentionParams,
    pub feed_forward: FeedForwardParams,
    pub norm_attention: LayerNormParams,
    pub norm_output: LayerNormParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItemEncoderParams {
    pub hidden: LinearParams,
    pub out: LinearParams,
    pub tier: Tier,
}

/// All learnable weights of one scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: EncoderConfig,
    pub store: ParamStore<T>,
    pub item_encoder: ItemEncoderParams,
    pub sabs: Vec<SabParams>,
    pub pooling: PoolingParams,
    pub users: ParamId,
    pub projection: FeedForwardParams,
}

struct Init<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Init<'_, T> {
    fn uniform(&mut self, name: String, rows: usize, cols: usize, bound: f64) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| T::lit(self.rng.random_range(-bound..bound)))
            .collect();
        self.store
            .add(name, Tensor::matrix(rows, cols, data).expect("sized by construction"))
    }

    fn weight(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        self.uniform(name, fan_in, fan_out, 1.0 / (fan_in as f64).sqrt())
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> LinearParams {
        let weight = self.weight(format!("{prefix}.w"), fan_in, fan_out);
        let bias = self.store.add(format!("{prefix}.b"), Tensor::zeros(&[1, fan_out]));
        LinearParams { weight, bias }
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, hidden: usize, out: usize) -> FeedForwardParams {
        FeedForwardParams {
            hidden: self.linear(&format!("{prefix}.hidden"), d, hidden),
            out: self.linear(&format!("{prefix}.out"), hidden, out),
        }
    }

    fn layer_norm(&mut self, prefix: &str, d: usize) -> LayerNormParams {
        LayerNormParams {
            gain: self.store.add(format!("{prefix}.gain"), Tensor::filled(&[d], T::one())),
            bias: self.store.add(format!("{prefix}.bias"), Tensor::zeros(&[d])),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize, heads: usize) -> MultiHeadAttentionParams {
        MultiHeadAttentionParams {
            query: self.weight(format!("{prefix}.wq"), d, d),
            key: self.weight(format!("{prefix}.wk"), d, d),
            value: self.weight(format!("{prefix}.wv"), d, d),
            output: self.weight(format!("{prefix}.wo"), d, d),
            heads,
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Builds a freshly initialised model; identical `(config, seed)` give identical weights.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (d, heads) = (config.d, config.heads);
        let mut store = ParamStore::new();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let width = config.tier.item_width();
        let item_encoder = ItemEncoderParams {
            hidden: init.linear("item.hidden", config.d_in, width),
            out: init.linear("item.out", width, d),
            tier: config.tier,
        };
        let sabs = (0..config.sab_count)
            .map(|i| {
                let p = format!("sab{i}");
                SabParams {
                    attention: init.attention(&format!("{p}.attn"), d, heads),
                    feed_forward: init.feed_forward(&format!("{p}.ff"), d, config.ff_width(), d),
                    norm_attention: init.layer_norm(&format!("{p}.norm1"), d),
                    norm_output: init.layer_norm(&format!("{p}.norm2"), d),
                }
            })
            .collect();
        let pooling = PoolingParams {
            seed: init.uniform("pool.seed".into(), 1, d, 1.0),
            attention: init.attention("pool.attn", d, heads),
            feed_forward: init.feed_forward("pool.ff", d, config.ff_width(), d),
            norm_attention: init.layer_norm("pool.norm1", d),
            norm_output: init.layer_norm("pool.norm2", d),
        };
        let projection = init.feed_forward("proj", d, d, d);
        let users = init.uniform("users".into(), config.user_count, d, 0.1);
        Ok(ModelParams {
            config,
            store,
            item_encoder,
            sabs,
            pooling,
            users,
            projection,
        })
    }

    pub fn d(&self) -> usize {
        self.config.d
    }

    pub fn user_count(&self) -> usize {
        self.config.user_count
    }

    pub fn user_embedding(&self, user: usize) -> Result<&[T]> {
        let table = self.store.get(self.users);
        if user >= table.rows() {
            return Err(Error::Lookup(format!(
                "user {user} not in embedding table of {} users",
                table.rows()
            )));
        }
        Ok(table.row(user))
    }

    fn check_outfit(&self, items: &[&[T]]) -> Result<()> {
        if items.is_empty() {
            return Err(Error::Input("empty outfit".into()));
        }
        if items.len() > self.config.max_outfit_size {
            return Err(Error::Input(format!(
                "outfit of {} items exceeds the maximum of {}",
                items.len(),
                self.config.max_outfit_size
            )));
        }
        if let Some(bad) = items.iter().find(|x| x.len() != self.config.d_in) {
            return Err(Error::Shape(format!(
                "item feature of length {} where d_in = {}",
                bad.len(),
                self.config.d_in
            )));
        }
        Ok(())
    }

    /// Records the outfit encoder on `tape` and returns the `1 × d` outfit representation.
    pub fn encode_outfit_on(&self, tape: &mut Tape<'_, T>, items: &[&[T]]) -> Result<Var> {
        self.check_outfit(items)?;
        let rows: Vec<T> = items.iter().flat_map(|x| x.iter().copied()).collect();
        let x = tape.input(Tensor::matrix(items.len(), self.config.d_in, rows)?);
        self.encode_features_on(tape, x)
    }

    /// Same as [`Self::encode_outfit_on`] but starting from an `n × d_in` tape value.
    pub fn encode_features_on(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let mut h = feed_forward(tape, x, &FeedForwardParams {
            hidden: self.item_encoder.hidden,
            out: self.item_encoder.out,
        })?;
        for sab_params in &self.sabs {
            h = sab(tape, h, sab_params)?;
        }
        pool(tape, h, &self.pooling)
    }

    /// Projection head used only by the contrastive objective.
    pub fn project_on(&self, tape: &mut Tape<'_, T>, outfit: Var) -> Result<Var> {
        feed_forward(tape, outfit, &self.projection)
    }

    /// Records `cos(u_user, o)` on the tape.
    pub fn score_on(&self, tape: &mut Tape<'_, T>, user: usize, outfit: Var) -> Result<Var> {
        self.user_embedding(user)?;
        let table = tape.param(self.users);
        let u = tape.select_row(table, user)?;
        tape.cosine(u, outfit)
    }

    pub fn encode_outfit(&self, items: &[&[T]]) -> Result<Vec<T>> {
        let mut tape = Tape::new(&self.store);
        let o = self.encode_outfit_on(&mut tape, items)?;
        Ok(tape.value(o).data().to_vec())
    }

    pub fn project(&self, items: &[&[T]]) -> Result<Vec<T>> {
        let mut tape = Tape::new(&self.store);
        let o = self.encode_outfit_on(&mut tape, items)?;
        let z = self.project_on(&mut tape, o)?;
        Ok(tape.value(z).data().to_vec())
    }

    pub fn preference_score(&self, user: usize, items: &[&[T]]) -> Result<T> {
        let u = self.user_embedding(user)?;
        let o = self.encode_outfit(items)?;
        cosine(u, &o)
    }

    /// Scores every `(user, outfit)` pair; row `i` holds `user_ids[i]`'s scores.
    pub fn score_batch(&self, user_ids: &[usize], outfits: &[Vec<&[T]>]) -> Result<Vec<Vec<T>>> {
        let encoded = outfits
            .iter()
            .map(|o| self.encode_outfit(o))
            .collect::<Result<Vec<_>>>()?;
        user_ids
            .iter()
            .map(|&u| {
                let emb = self.user_embedding(u)?;
                encoded.iter().map(|o| cosine(emb, o)).collect()
            })
            .collect()
    }
}

fn linear<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, p: &LinearParams) -> Result<Var> {
    let w = tape.param(p.weight);
    let b = tape.param(p.bias);
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// Row-wise feed-forward layer with one relu hidden layer.
pub fn feed_forward<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, p: &FeedForwardParams) -> Result<Var> {
    let h = linear(tape, x, &p.hidden)?;
    let h = tape.relu(h)?;
    linear(tape, h, &p.out)
}

fn layer_norm<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, p: &LayerNormParams) -> Result<Var> {
    let gain = tape.param(p.gain);
    let bias = tape.param(p.bias);
    tape.layer_norm(x, gain, bias, T::lit(NORM_EPSILON))
}

/// `Concat(A₁..A_h) W^M` with `A_i = softmax(Q W_iᵠ (K W_iᴷ)ᵀ / √(d/h)) V W_iⱽ`.
pub fn multi_head_attention<T: Scalar>(
    tape: &mut Tape<'_, T>,
    q: Var,
    k: Var,
    v: Var,
    p: &MultiHeadAttentionParams,
) -> Result<Var> {
    let d = tape.value(q).cols();
    let dv = tape.value(v).cols();
    if p.heads == 0 || d % p.heads != 0 || dv % p.heads != 0 {
        return Err(Error::Config(format!(
            "{} heads do not divide query width {d} and value width {dv}",
            p.heads
        )));
    }
    if tape.value(k).rows() != tape.value(v).rows() {
        return Err(Error::Shape("keys and values differ in row count".into()));
    }
    let (wq, wk, wv, wo) = (
        tape.param(p.query),
        tape.param(p.key),
        tape.param(p.value),
        tape.param(p.output),
    );
    let qp = tape.matmul(q, wq)?;
    let kp = tape.matmul(k, wk)?;
    let vp = tape.matmul(v, wv)?;
    let (hq, hv) = (d / p.heads, dv / p.heads);
    let scale = T::lit(hq as f64).sqrt();
    let mut heads = Vec::with_capacity(p.heads);
    for i in 0..p.heads {
        let qi = tape.slice_cols(qp, i * hq, (i + 1) * hq)?;
        let ki = tape.slice_cols(kp, i * hq, (i + 1) * hq)?;
        let vi = tape.slice_cols(vp, i * hv, (i + 1) * hv)?;
        let logits = tape.matmul_nt(qi, ki)?;
        let weights = tape.softmax_rows(logits, scale)?;
        heads.push(tape.matmul(weights, vi)?);
    }
    let joined = tape.concat_cols(&heads)?;
    tape.matmul(joined, wo)
}

/// Set attention block: `H = LN(X + MHA(X,X,X))`, `LN(H + σ(H))`.
pub fn sab<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, p: &SabParams) -> Result<Var> {
    if tape.value(x).rows() == 0 {
        return Err(Error::Input("set attention over zero rows".into()));
    }
    let attended = multi_head_attention(tape, x, x, x, &p.attention)?;
    let h = tape.add(x, attended)?;
    let h = layer_norm(tape, h, &p.norm_attention)?;
    let ff = feed_forward(tape, h, &p.feed_forward)?;
    let out = tape.add(h, ff)?;
    layer_norm(tape, out, &p.norm_output)
}

/// Seed-vector pooling: `z = LN(s + MHA(s,F,F))`, `LN(z + σ(z))`.
pub fn pool<T: Scalar>(tape: &mut Tape<'_, T>, features: Var, p: &PoolingParams) -> Result<Var> {
    let seed = tape.param(p.seed);
    let attended = multi_head_attention(tape, seed, features, features, &p.attention)?;
    let z = tape.add(seed, attended)?;
    let z = layer_norm(tape, z, &p.norm_attention)?;
    let ff = feed_forward(tape, z, &p.feed_forward)?;
    let out = tape.add(z, ff)?;
    layer_norm(tape, out, &p.norm_output)
}
