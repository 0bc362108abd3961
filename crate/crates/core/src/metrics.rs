//! Per-user ranking metrics and the user-averaged evaluation protocol.

use std::io::Write;

use crate::error::{Error, Result};

/// Scored candidates for one user.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedList {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl RankedList {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Input(format!("non-finite score {s}")));
        }
        Ok(RankedList { scores, labels })
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }
}

/// Mann-Whitney AUC: share of (positive, negative) pairs ordered correctly, ties counting 1/2.
pub fn auc(list: &RankedList) -> Result<f64> {
    let (n_pos, n_neg) = (list.positives(), list.negatives());
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined(format!(
            "AUC needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }
    // rank-sum form with midranks for tied groups
    let mut order: Vec<usize> = (0..list.scores.len()).collect();
    order.sort_by(|&a, &b| list.scores[a].total_cmp(&list.scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && list.scores[order[j + 1]] == list.scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| list.labels[k]).count();
        pos_rank_sum += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = pos_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Binary-gain NDCG over the full list; equal scores keep their input order.
pub fn ndcg(list: &RankedList) -> Result<f64> {
    let n_pos = list.positives();
    if n_pos == 0 {
        return Err(Error::MetricUndefined("NDCG needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..list.scores.len()).collect();
    // stable sort, so ties stay in candidate order
    order.sort_by(|&a, &b| list.scores[b].total_cmp(&list.scores[a]));
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = order
        .iter()
        .enumerate()
        .filter(|(_, &k)| list.labels[k])
        .map(|(r, _)| gain(r + 1))
        .sum();
    let ideal: f64 = (1..=n_pos).map(gain).sum();
    Ok(dcg / ideal)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserMetrics {
    pub user: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auc: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub mean_auc: f64,
    pub mean_ndcg: f64,
    pub per_user: Vec<UserMetrics>,
    /// Users excluded because a metric was undefined for them.
    pub skipped: Vec<usize>,
}

/// Unweighted mean over users. Users whose lists are degenerate are skipped with a warning.
pub fn evaluate(lists: &[(usize, RankedList)]) -> Result<Evaluation> {
    let mut out = Evaluation::default();
    for (user, list) in lists {
        match (auc(list), ndcg(list)) {
            (Ok(a), Ok(n)) => out.per_user.push(UserMetrics {
                user: *user,
                n_pos: list.positives(),
                n_neg: list.negatives(),
                auc: a,
                ndcg: n,
            }),
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("user {user} excluded from evaluation: {e}");
                out.skipped.push(*user);
            }
        }
    }
    if out.per_user.is_empty() {
        return Err(Error::MetricUndefined("no user has a valid evaluation list".into()));
    }
    let n = out.per_user.len() as f64;
    out.mean_auc = out.per_user.iter().map(|m| m.auc).sum::<f64>() / n;
    out.mean_ndcg = out.per_user.iter().map(|m| m.ndcg).sum::<f64>() / n;
    Ok(out)
}

/// Tab-separated per-user table followed by a `mean` summary row.
pub fn write_metrics_tsv(eval: &Evaluation, w: &mut impl Write) -> Result<()> {
    writeln!(w, "user\tn_pos\tn_neg\tauc\tndcg")?;
    for m in &eval.per_user {
        writeln!(w, "{}\t{}\t{}\t{:.6}\t{:.6}", m.user, m.n_pos, m.n_neg, m.auc, m.ndcg)?;
    }
    let n_pos: usize = eval.per_user.iter().map(|m| m.n_pos).sum();
    let n_neg: usize = eval.per_user.iter().map(|m| m.n_neg).sum();
    writeln!(w, "mean\t{n_pos}\t{n_neg}\t{:.6}\t{:.6}", eval.mean_auc, eval.mean_ndcg)?;
    Ok(())
}
