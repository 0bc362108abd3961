use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{make_views, train_autoencoder, AutoencoderConfig, SimilarityIndex};
use crate::datagen::{
    build_eval_sets, sample_hard_negative, sample_negative, Dataset, ItemId, NegativeMode, OutfitId, Split,
    UserEvalSet, UserId,
};
use crate::diffcore::{cosine, cosine_backward, ParamGrads, SgdMomentum, Tape, Tensor, Var};
use crate::encoder::{save_checkpoint, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::objectives::{bpr_loss, cl_loss, fnd_cl_loss, fnd_loss, npair_loss, TeacherCache};
use crate::{Model, Real};

use super::eval::{evaluate_sets, model_hash};
use super::{ExperimentReport, LossKind, Mode, NegativePool, RunConfig, EpochRecord};

// separates the augmentation stream from the sampling stream
const AUGMENT_STREAM: u64 = 0xa06e_17a7_10e5_eed5;

/// A trained model with the report of its run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub report: ExperimentReport,
}

pub(crate) fn negative_mode(hard: bool) -> NegativeMode {
    if hard {
        NegativeMode::Hard
    } else {
        NegativeMode::Standard
    }
}

/// Fresh model shaped by `cfg` for `dataset`.
pub fn init_model(cfg: &RunConfig, dataset: &Dataset) -> Result<Model> {
    let mut enc = EncoderConfig::new(dataset.d_in(), dataset.user_count(), cfg.tier);
    enc.d = cfg.d;
    enc.heads = cfg.heads;
    enc.sab_count = cfg.sab_count;
    let largest = dataset.outfits.iter().map(|o| o.items.len()).max().unwrap_or(1);
    enc.max_outfit_size = enc.max_outfit_size.max(largest);
    ModelParams::new(enc, cfg.seed)
}

/// Trains the teacher with the npair loss, selecting on `val_teacher`.
pub fn train_teacher(cfg: &RunConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    if cfg.mode != Mode::Teacher {
        return Err(Error::Config("train_teacher needs mode = teacher".into()));
    }
    cfg.validate()?;
    Trainer::new(cfg, dataset, None, None, Split::ValTeacher)?.run("teacher")
}

/// Trains a student, selecting on `val_student`.
///
/// `cache` is required for the distillation losses; `index` is built from an autoencoder when
/// the augmentation pair needs one and none is supplied.
pub fn train_student(
    cfg: &RunConfig,
    dataset: &Dataset,
    cache: Option<&TeacherCache<Real>>,
    index: Option<&SimilarityIndex>,
) -> Result<TrainOutcome> {
    if cfg.mode != Mode::Student {
        return Err(Error::Config("train_student needs mode = student".into()));
    }
    cfg.validate()?;
    if cfg.loss.needs_teacher() && cache.is_none() {
        return Err(Error::Config(format!("loss {} needs a teacher cache", cfg.loss)));
    }
    let built;
    let index = if cfg.loss == LossKind::FndCl && cfg.augment.needs_index() && index.is_none() {
        built = build_similarity_index(cfg, dataset)?;
        Some(&built)
    } else {
        index
    };
    let hash_before = cache.map(|c| model_hash(c.teacher()));
    let mut out = Trainer::new(cfg, dataset, cache, index, Split::ValStudent)?.run(&format!("student {}", cfg.loss))?;
    if let (Some(c), Some(before)) = (cache, hash_before) {
        let after = model_hash(c.teacher());
        if after != before {
            return Err(Error::Input("teacher parameters changed during a student run".into()));
        }
        out.report.note("teacher_hash", format!("{after:016x}"));
    }
    Ok(out)
}

/// Autoencoder-backed item index for the replace augmentation.
pub fn build_similarity_index(cfg: &RunConfig, dataset: &Dataset) -> Result<SimilarityIndex> {
    let rows: Vec<&[f32]> = dataset.items.iter().map(|it| it.features.as_slice()).collect();
    let ae_cfg = AutoencoderConfig {
        latent: cfg.ae_latent,
        epochs: cfg.ae_epochs,
        seed: cfg.seed,
        ..AutoencoderConfig::default()
    };
    let (ae, report) = train_autoencoder(&rows, &ae_cfg)?;
    log::info!(
        "autoencoder holdout mse {:.4} -> {:.4}",
        report.holdout_mse_initial,
        report.holdout_mse_final
    );
    SimilarityIndex::from_autoencoder(dataset, &ae)
}

/// Frozen teacher plus each user's mean teacher score over their training positives.
pub fn build_teacher_cache(teacher: Model, dataset: &Dataset) -> Result<TeacherCache<Real>> {
    if !teacher.config.tier.is_teacher() {
        return Err(Error::Config(format!("checkpoint tier {} is not a teacher", teacher.config.tier)));
    }
    if teacher.user_count() != dataset.user_count() {
        return Err(Error::Input(format!(
            "teacher knows {} users, dataset has {}",
            teacher.user_count(),
            dataset.user_count()
        )));
    }
    let mut means = Vec::with_capacity(dataset.user_count());
    for (u, splits) in dataset.users.iter().enumerate() {
        if splits.train.is_empty() {
            log::warn!("user {u} has no training positives; excluded from distillation");
            means.push(None);
            continue;
        }
        let mut total = 0.0f64;
        for &o in &splits.train {
            total += teacher.preference_score(u, &dataset.outfit_features(o)?)? as f64;
        }
        means.push(Some((total / splits.train.len() as f64) as Real));
    }
    TeacherCache::new(teacher, means)
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    dataset: &'a Dataset,
    cache: Option<&'a TeacherCache<Real>>,
    index: Option<&'a SimilarityIndex>,
    model: Model,
    grads: ParamGrads<Real>,
    opt: SgdMomentum<Real>,
    rng: ChaCha8Rng,
    aug_rng: ChaCha8Rng,
    /// Every `(user, training positive)` pair.
    pairs: Vec<(UserId, OutfitId)>,
    by_category: Vec<Vec<ItemId>>,
    val_sets: Vec<UserEvalSet>,
    report: ExperimentReport,
}

/// Outfits encoded on their own tapes, plus per-pair references to them.
struct BatchOutfits<'s> {
    items: Vec<Vec<ItemId>>,
    tapes: Vec<Tape<'s, Real>>,
    vars: Vec<Var>,
    reprs: Vec<Vec<Real>>,
}

impl<'s> BatchOutfits<'s> {
    fn new() -> Self {
        BatchOutfits {
            items: Vec::new(),
            tapes: Vec::new(),
            vars: Vec::new(),
            reprs: Vec::new(),
        }
    }

    fn push(&mut self, items: Vec<ItemId>) -> usize {
        self.items.push(items);
        self.items.len() - 1
    }

    fn encode(&mut self, model: &'s Model, dataset: &Dataset, project: bool) -> Result<()> {
        for items in &self.items[self.tapes.len()..] {
            let mut tape = Tape::new(&model.store);
            let mut v = model.encode_outfit_on(&mut tape, &dataset.features(items)?)?;
            if project {
                v = model.project_on(&mut tape, v)?;
            }
            self.reprs.push(tape.value(v).data().to_vec());
            self.vars.push(v);
            self.tapes.push(tape);
        }
        Ok(())
    }

    /// Backpropagates `seeds[i]` through outfit `i`; all-zero seeds are skipped.
    fn backward(&self, seeds: Vec<Vec<Real>>, grads: &mut ParamGrads<Real>) -> Result<()> {
        for ((tape, &v), seed) in self.tapes.iter().zip(&self.vars).zip(seeds) {
            if seed.iter().all(|&g| g == 0.0) {
                continue;
            }
            let len = seed.len();
            tape.backward(v, Tensor::matrix(1, len, seed)?, grads)?;
        }
        Ok(())
    }
}

fn add_into(acc: &mut [Real], v: &[Real]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

impl<'a> Trainer<'a> {
    fn new(
        cfg: &'a RunConfig,
        dataset: &'a Dataset,
        cache: Option<&'a TeacherCache<Real>>,
        index: Option<&'a SimilarityIndex>,
        selection: Split,
    ) -> Result<Self> {
        let model = init_model(cfg, dataset)?;
        let grads = ParamGrads::zeros_like(&model.store);
        let opt = SgdMomentum::new(&model.store, cfg.lr as Real, cfg.momentum as Real)?;
        let pairs: Vec<(UserId, OutfitId)> = dataset
            .users
            .iter()
            .enumerate()
            .flat_map(|(u, s)| s.train.iter().map(move |&o| (u, o)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::Input("no training positives".into()));
        }
        if cfg.hard_negatives && dataset.user_count() < 2 {
            return Err(Error::Input("hard negatives need at least two users".into()));
        }
        let val_sets = build_eval_sets(dataset, selection, cfg.eval_ratio, negative_mode(cfg.hard_negatives), cfg.eval_seed)?;
        Ok(Trainer {
            cfg,
            dataset,
            cache,
            index,
            model,
            grads,
            opt,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)),
            aug_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ AUGMENT_STREAM),
            pairs,
            by_category: dataset.items_by_category(),
            val_sets,
            report: ExperimentReport::new("", cfg.clone()),
        })
    }

    fn run(mut self, title: &str) -> Result<TrainOutcome> {
        let start = Instant::now();
        self.report.title = title.to_string();
        let mut best = self.model.clone();
        let mut best_auc = evaluate_sets(&self.model, self.dataset, &self.val_sets)?.mean_auc;
        self.report.epochs.push(EpochRecord {
            epoch: 0,
            train_loss: f64::NAN,
            val_auc: best_auc,
        });
        let mut pairs = self.pairs.clone();
        for epoch in 1..=self.cfg.epochs {
            pairs.shuffle(&mut self.rng);
            let mut total = 0.0;
            for chunk in pairs.chunks(self.cfg.batch_size) {
                let loss = match self.step(chunk) {
                    Ok(l) => l,
                    Err(e @ Error::Divergence(_)) => {
                        self.save_last_finite();
                        return Err(e);
                    }
                    Err(e) => return Err(e),
                };
                total += loss * chunk.len() as f64;
            }
            let train_loss = total / pairs.len() as f64;
            let val_auc = evaluate_sets(&self.model, self.dataset, &self.val_sets)?.mean_auc;
            log::info!("{title} epoch {epoch}: loss {train_loss:.5} val auc {val_auc:.4}");
            self.report.epochs.push(EpochRecord { epoch, train_loss, val_auc });
            if val_auc > best_auc {
                best_auc = val_auc;
                best = self.model.clone();
                self.report.best_epoch = epoch;
            }
        }
        let test_sets = build_eval_sets(
            self.dataset,
            Split::Test,
            self.cfg.eval_ratio,
            negative_mode(self.cfg.hard_negatives),
            self.cfg.eval_seed,
        )?;
        let test = evaluate_sets(&best, self.dataset, &test_sets)?;
        self.report.set_metric("val_auc", best_auc);
        self.report.set_metric("test_auc", test.mean_auc);
        self.report.set_metric("test_ndcg", test.mean_ndcg);
        self.report.wall_clock_secs = start.elapsed().as_secs_f64();
        Ok(TrainOutcome {
            model: best,
            report: self.report,
        })
    }

    fn save_last_finite(&self) {
        if let Some(dir) = &self.cfg.out_dir {
            let path = dir.join("diverged_last_finite.ckpt");
            match std::fs::create_dir_all(dir).map_err(Error::from).and_then(|_| save_checkpoint(&self.model, &path)) {
                Ok(()) => log::error!("training diverged; last finite parameters saved to {}", path.display()),
                Err(e) => log::error!("training diverged and the last finite state could not be saved: {e}"),
            }
        }
    }

    /// Negatives of one batch: returns per-pair indices into `outfits`.
    fn sample_negatives(&mut self, chunk: &[(UserId, OutfitId)], outfits: &mut BatchOutfits<'_>) -> Result<Vec<Vec<usize>>> {
        let n_neg = if self.cfg.loss == LossKind::Bpr { 1 } else { self.cfg.batch_size };
        let n_hard = if self.cfg.hard_negatives { n_neg / 2 } else { 0 };
        let d = self.dataset;
        match self.cfg.negative_pool {
            NegativePool::PerPair => {
                let mut refs = Vec::with_capacity(chunk.len());
                for &(user, _) in chunk {
                    let mut mine = Vec::with_capacity(n_neg);
                    for k in 0..n_neg {
                        let items = if k < n_hard {
                            let o = sample_hard_negative(d, user, &mut self.rng)?;
                            d.outfit(o)?.items.clone()
                        } else {
                            sample_negative(d, &self.by_category, &mut self.rng)
                        };
                        mine.push(outfits.push(items));
                    }
                    refs.push(mine);
                }
                Ok(refs)
            }
            NegativePool::Shared => {
                // hard entries remember their owner so a pair never sees its own positive
                let mut pool: Vec<(usize, Option<UserId>)> = Vec::with_capacity(n_neg);
                for k in 0..n_neg {
                    if k < n_hard {
                        let (owner, o) = self.pairs[self.rng.random_range(0..self.pairs.len())];
                        pool.push((outfits.push(d.outfit(o)?.items.clone()), Some(owner)));
                    } else {
                        pool.push((outfits.push(sample_negative(d, &self.by_category, &mut self.rng)), None));
                    }
                }
                Ok(chunk
                    .iter()
                    .map(|&(user, _)| {
                        pool.iter()
                            .filter(|(_, owner)| *owner != Some(user))
                            .map(|(i, _)| *i)
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// One SGD step on `chunk`; returns the batch loss.
    fn step(&mut self, chunk: &[(UserId, OutfitId)]) -> Result<f64> {
        let cfg = self.cfg;
        let loss_cfg = cfg.loss_config();
        let mut outfits = BatchOutfits::new();
        for &(_, o) in chunk {
            outfits.push(self.dataset.outfit(o)?.items.clone());
        }
        let neg_refs = self.sample_negatives(chunk, &mut outfits)?;
        let model = &self.model;
        let value;
        self.grads.clear();
        {
            outfits.encode(model, self.dataset, false)?;
            let users: Vec<&[Real]> = chunk
                .iter()
                .map(|&(u, _)| model.user_embedding(u))
                .collect::<Result<_>>()?;
            let mut pos = Vec::with_capacity(chunk.len());
            let mut neg = Vec::with_capacity(chunk.len());
            for (i, refs) in neg_refs.iter().enumerate() {
                pos.push(cosine(users[i], &outfits.reprs[i])?);
                neg.push(refs.iter().map(|&r| cosine(users[i], &outfits.reprs[r])).collect::<Result<Vec<_>>>()?);
            }
            let scored = match cfg.loss {
                LossKind::Bpr => {
                    let first: Vec<Real> = neg.iter().map(|n| n[0]).collect();
                    bpr_loss(&pos, &first, loss_cfg.tau_fnd)?
                }
                LossKind::Npair => npair_loss(&pos, &neg, loss_cfg.tau_fnd)?,
                LossKind::Fnd | LossKind::FndCl => {
                    let cache = self.cache.ok_or_else(|| Error::Config("distillation needs a teacher cache".into()))?;
                    let mut signals = Vec::with_capacity(chunk.len());
                    for (i, refs) in neg_refs.iter().enumerate() {
                        let user = chunk[i].0;
                        let mut row = Vec::with_capacity(refs.len());
                        for &r in refs {
                            let key = &outfits.items[r];
                            let s = match cfg.signal_override {
                                Some(v) => v as Real,
                                None => cache.false_negativeness(user, key, &self.dataset.features(key)?, loss_cfg.alpha)?,
                            };
                            row.push(s);
                        }
                        signals.push(row);
                    }
                    fnd_loss(&pos, &neg, &signals, loss_cfg.tau_fnd)?
                }
            };
            // score gradients to user rows and outfit representations
            let d = model.d();
            let mut seeds = vec![vec![0.0; d]; outfits.items.len()];
            let user_param = model.users;
            for (i, refs) in neg_refs.iter().enumerate() {
                let user = chunk[i].0;
                let mut gu_total = vec![0.0; d];
                let (gu, go) = cosine_backward(users[i], &outfits.reprs[i], scored.grad_pos[i])?;
                add_into(&mut gu_total, &gu);
                add_into(&mut seeds[i], &go);
                for (k, &r) in refs.iter().enumerate() {
                    let (gu, go) = cosine_backward(users[i], &outfits.reprs[r], scored.grad_neg[i][k])?;
                    add_into(&mut gu_total, &gu);
                    add_into(&mut seeds[r], &go);
                }
                add_into(self.grads.get_mut(user_param).row_mut(user), &gu_total);
            }
            outfits.backward(seeds, &mut self.grads)?;

            let mut total = scored.value;
            if cfg.loss == LossKind::FndCl {
                let mut views = BatchOutfits::new();
                for i in 0..chunk.len() {
                    let (a, b) = make_views(&outfits.items[i], cfg.augment, self.index, cfg.replace_k, &mut self.aug_rng)?;
                    views.push(a);
                    views.push(b);
                }
                views.encode(model, self.dataset, true)?;
                let (cl, grads) = cl_loss(&views.reprs, loss_cfg.tau_cl)?;
                let seeds = grads
                    .into_iter()
                    .map(|g| g.into_iter().map(|v| loss_cfg.lambda * v).collect())
                    .collect();
                views.backward(seeds, &mut self.grads)?;
                total = fnd_cl_loss(scored.value, cl, loss_cfg.lambda)?;
            }
            value = total as f64;
        }
        if !value.is_finite() {
            return Err(Error::Divergence(format!("non-finite training loss {value}")));
        }
        self.opt.step(&mut self.model.store, &self.grads)?;
        Ok(value)
    }
}

const MEANS_MAGIC: &str = "outfitrank-teachermeans";
pub const TEACHER_MEANS_VERSION: u32 = 1;

/// Writes the cached positive boundaries, one `<user> <mean>|-` line each.
pub fn write_teacher_means(cache: &TeacherCache<Real>, w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "{MEANS_MAGIC} {TEACHER_MEANS_VERSION}")?;
    for u in 0..cache.teacher().user_count() {
        match cache.positive_mean(u) {
            Ok(m) => writeln!(w, "{u} {m:.8e}")?,
            Err(_) => writeln!(w, "{u} -")?,
        }
    }
    Ok(())
}

pub fn read_teacher_means(r: impl std::io::BufRead) -> Result<Vec<Option<Real>>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::parse("means", 1, "empty file"))??;
    let mut head = header.split_whitespace();
    if head.next() != Some(MEANS_MAGIC) {
        return Err(Error::parse("means", 1, "not a teacher-means file"));
    }
    let version: u32 = head
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse("means", 1, "missing version"))?;
    if version != TEACHER_MEANS_VERSION {
        return Err(Error::Version {
            found: version,
            expected: TEACHER_MEANS_VERSION,
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let mut toks = line.split_whitespace();
        let (Some(u), Some(v)) = (toks.next(), toks.next()) else {
            return Err(Error::parse("means", i + 2, "expected `<user> <mean>`"));
        };
        if u.parse::<usize>().ok() != Some(out.len()) {
            return Err(Error::parse("means", i + 2, format!("expected user {}", out.len())));
        }
        out.push(if v == "-" {
            None
        } else {
            Some(v.parse().map_err(|_| Error::parse("means", i + 2, format!("invalid mean `{v}`")))?)
        });
    }
    Ok(out)
}
