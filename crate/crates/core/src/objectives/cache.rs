use std::collections::HashMap;
use std::sync::RwLock;

use crate::diffcore::cosine;
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const DEFAULT_MEMO_CAPACITY: usize = 200_000;

/// Frozen teacher plus each user's positive boundary `r̂ᵢ`.
///
/// Teacher outfit encodings are memoised by their sorted item ids, so scoring a negative for
/// several users encodes it once. The memo is cleared when it reaches capacity.
pub struct TeacherCache<T: Scalar> {
    teacher: ModelParams<T>,
    positive_mean: Vec<Option<T>>,
    memo: RwLock<HashMap<Vec<usize>, Vec<T>>>,
    capacity: usize,
    signal_override: Option<T>,
}

impl<T: Scalar> TeacherCache<T> {
    /// `positive_mean[u]` is `None` for users excluded from distillation.
    pub fn new(teacher: ModelParams<T>, positive_mean: Vec<Option<T>>) -> Result<Self> {
        if positive_mean.len() != teacher.user_count() {
            return Err(Error::Shape(format!(
                "{} boundaries for a teacher with {} users",
                positive_mean.len(),
                teacher.user_count()
            )));
        }
        Ok(TeacherCache {
            teacher,
            positive_mean,
            memo: RwLock::new(HashMap::new()),
            capacity: DEFAULT_MEMO_CAPACITY,
            signal_override: None,
        })
    }

    /// Replaces every false-negativeness value by `value` (used to check loss reductions).
    pub fn with_signal_override(mut self, value: T) -> Self {
        self.signal_override = Some(value);
        self
    }

    pub fn with_memo_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    pub fn teacher(&self) -> &ModelParams<T> {
        &self.teacher
    }

    pub fn positive_mean(&self, user: usize) -> Result<T> {
        self.positive_mean
            .get(user)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Lookup(format!("user {user} has no cached positive boundary")))
    }

    pub fn has_user(&self, user: usize) -> bool {
        matches!(self.positive_mean.get(user), Some(Some(_)))
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().map(|m| m.len()).unwrap_or(0)
    }

    fn encoding(&self, key: &[usize], items: &[&[T]]) -> Result<Vec<T>> {
        let mut sorted = key.to_vec();
        sorted.sort_unstable();
        if let Some(hit) = self.memo.read().expect("memo lock").get(&sorted) {
            return Ok(hit.clone());
        }
        // encode in canonical order so the value does not depend on which permutation came first
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by_key(|&i| key[i]);
        let canonical: Vec<&[T]> = order.iter().map(|&i| items[i]).collect();
        let encoded = self.teacher.encode_outfit(&canonical)?;
        let mut memo = self.memo.write().expect("memo lock");
        if memo.len() >= self.capacity {
            memo.clear();
        }
        memo.insert(sorted, encoded.clone());
        Ok(encoded)
    }

    /// Frozen teacher score `r̂` of `user` for the outfit with item ids `key` and features `items`.
    pub fn teacher_score(&self, user: usize, key: &[usize], items: &[&[T]]) -> Result<T> {
        if key.len() != items.len() {
            return Err(Error::Shape("outfit key and features differ in length".into()));
        }
        let o = self.encoding(key, items)?;
        cosine(self.teacher.user_embedding(user)?, &o)
    }

    /// `α·(r̂ᵢ − r̂)`: positive pushes the negative away, negative marks a likely false negative.
    pub fn false_negativeness(&self, user: usize, key: &[usize], items: &[&[T]], alpha: T) -> Result<T> {
        let boundary = self.positive_mean(user)?;
        if let Some(v) = self.signal_override {
            return Ok(v);
        }
        Ok(alpha * (boundary - self.teacher_score(user, key, items)?))
    }
}
