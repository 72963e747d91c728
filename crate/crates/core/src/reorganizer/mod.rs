//! Similarity-based token consolidation.
//!
//! Tokens are compacted by repeatedly merging the most cosine-similar pairs
//! into their size-weighted average. Every merge is recorded in a
//! [`MergePlan`] so the receiver can broadcast merged tokens back to their
//! source patches.

mod knn;
mod plan;
mod schedule;

pub use knn::knn_merge;
pub use plan::{MergePlan, MergeStage};
pub use schedule::{build_schedule, MergeSchedule};

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::tokenizer::AttentionStage;
use crate::tokens::TokenSequence;

/// A proposed merge of an A-set token with a B-set token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergePair<T> {
    pub a: usize,
    pub b: usize,
    pub similarity: T,
}

/// Which feature space drives the matching.
#[derive(Debug, Clone, Copy)]
pub enum SimilaritySource<'a, T> {
    /// The token vectors themselves.
    Tokens,
    /// Mean-over-heads keys of the interleaved attention blocks.
    Keys(&'a AttentionStage<T>),
    /// Attention-block outputs.
    Hidden(&'a AttentionStage<T>),
}

impl<T> SimilaritySource<'_, T> {
    fn stage(&self) -> Option<&AttentionStage<T>> {
        match self {
            SimilaritySource::Tokens => None,
            SimilaritySource::Keys(s) | SimilaritySource::Hidden(s) => Some(s),
        }
    }
}

/// Similarities are ranked on a 2⁻³⁰ grid so values that differ only by
/// rounding noise count as ties.
fn rank<T: Scalar>(similarity: T) -> i64 {
    (similarity.as_f64() * (1u64 << 30) as f64).round() as i64
}

/// Descending similarity, then lower A index, then lower B index.
fn edge_order<T: Scalar>(x: &MergePair<T>, y: &MergePair<T>) -> Ordering {
    rank(y.similarity).cmp(&rank(x.similarity)).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b))
}

/// Bipartite soft matching over the rows of `features`.
///
/// Even rows form set A, odd rows set B. Each A token is linked to its most
/// cosine-similar B token (lower B index on ties) and the `r` strongest links
/// are returned, ties going to the lower A index. Similarities within about
/// 1e-9 of each other are treated as tied. Several A tokens may link
/// to the same B token; they then merge into it together.
pub fn bipartite_soft_matching<T: Scalar>(features: &Matrix<T>, r: usize) -> Result<Vec<MergePair<T>>> {
    let n = features.rows();
    let limit = n / 2;
    if r > limit {
        return Err(Error::InvalidR { r, n, limit });
    }
    if r == 0 {
        return Ok(Vec::new());
    }
    let unit: Vec<Vec<T>> = features
        .iter_rows()
        .map(|row| {
            let norm = crate::scalar::norm(row);
            if norm == T::zero() {
                Vec::new()
            } else {
                row.iter().map(|&v| v / norm).collect()
            }
        })
        .collect();
    let sim = |a: usize, b: usize| -> T {
        if unit[a].is_empty() || unit[b].is_empty() {
            -T::one()
        } else {
            crate::scalar::dot(&unit[a], &unit[b])
        }
    };
    let mut links: Vec<MergePair<T>> = (0..n)
        .step_by(2)
        .map(|a| {
            let mut best = MergePair { a, b: 1, similarity: sim(a, 1) };
            for b in (3..n).step_by(2) {
                let s = sim(a, b);
                if rank(s) > rank(best.similarity) {
                    best = MergePair { a, b, similarity: s };
                }
            }
            best
        })
        .collect();
    links.sort_by(edge_order);
    links.truncate(r);
    Ok(links)
}

/// Size-weighted merge of matrix rows under a stage; rows follow the canonical
/// post-stage order. Rows that are not merged are copied bit-for-bit.
fn merge_rows<T: Scalar>(x: &Matrix<T>, sizes: &[usize], stage: &MergeStage) -> Matrix<T> {
    let n_after = stage.n_after();
    let mut members = vec![0usize; n_after];
    for &d in &stage.dest {
        members[d] += 1;
    }
    let mut out = Matrix::zeros(n_after, x.cols());
    let mut weight = vec![T::zero(); n_after];
    for i in 0..stage.n_before {
        let d = stage.dest[i];
        if members[d] == 1 {
            out.row_mut(d).copy_from_slice(x.row(i));
            continue;
        }
        let s = T::from_usize_lossy(sizes[i]);
        weight[d] = weight[d] + s;
        for (o, &v) in out.row_mut(d).iter_mut().zip(x.row(i)) {
            *o = *o + s * v;
        }
    }
    for d in 0..n_after {
        if members[d] > 1 {
            let w = weight[d];
            out.row_mut(d).iter_mut().for_each(|o| *o = *o / w);
        }
    }
    out
}

/// Origin lists of a group are concatenated in pre-stage index order.
pub(crate) fn merge_origins(origin: &[Vec<usize>], stage: &MergeStage) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); stage.n_after()];
    for (i, o) in origin.iter().enumerate() {
        out[stage.dest[i]].extend_from_slice(o);
    }
    out
}

fn merge_sizes(sizes: &[usize], stage: &MergeStage) -> Vec<usize> {
    let mut out = vec![0; stage.n_after()];
    for (i, &s) in sizes.iter().enumerate() {
        out[stage.dest[i]] += s;
    }
    out
}

/// Replays one stage on a sequence.
pub fn apply_stage<T: Scalar>(ts: &TokenSequence<T>, stage: &MergeStage) -> Result<TokenSequence<T>> {
    if ts.len() != stage.n_before {
        return Err(Error::PlanMismatch(format!("stage expects {} tokens, got {}", stage.n_before, ts.len())));
    }
    Ok(TokenSequence {
        tokens: merge_rows(&ts.tokens, &ts.sizes, stage),
        sizes: merge_sizes(&ts.sizes, stage),
        origin: merge_origins(&ts.origin, stage),
    })
}

/// Merges each pair `(a, b)` into `(sₐ·tₐ + s_b·t_b)/(sₐ + s_b)` with size
/// `sₐ + s_b` and the two origin lists concatenated. Sources sharing a
/// destination are averaged together with it. Unpaired tokens pass through.
pub fn apply_merge<T: Scalar>(
    ts: &TokenSequence<T>,
    pairs: &[(usize, usize)],
) -> Result<(TokenSequence<T>, MergeStage)> {
    let stage = MergeStage::new(ts.len(), pairs.to_vec())?;
    Ok((apply_stage(ts, &stage)?, stage))
}

/// Runs the schedule, one bipartite matching and merge per stage.
///
/// With an attention source the blocks run interleaved: each stage attends,
/// matches on the chosen attention features, merges, then applies the
/// feed-forward half, with the hidden states merged alongside the tokens.
/// The returned tokens are always the merged input tokens.
pub fn reorganize<T: Scalar>(
    ts: &TokenSequence<T>,
    schedule: &MergeSchedule,
    source: SimilaritySource<'_, T>,
) -> Result<(TokenSequence<T>, MergePlan)> {
    schedule.token_counts(ts.len())?;
    if let Some(stage) = source.stage() {
        if stage.n_layers() != schedule.n_stages() {
            return Err(Error::DimensionMismatch(format!(
                "{} attention blocks for a {}-stage schedule",
                stage.n_layers(),
                schedule.n_stages()
            )));
        }
    }
    let mut plan = MergePlan::empty(ts.len());
    let mut cur = ts.clone();
    let mut hidden = source.stage().map(|_| ts.tokens.clone());
    for (layer, &r) in schedule.merges.iter().enumerate() {
        let pairs = match (source, hidden.as_mut()) {
            (SimilaritySource::Tokens, _) => bipartite_soft_matching(&cur.tokens, r)?,
            (SimilaritySource::Keys(att) | SimilaritySource::Hidden(att), Some(h)) => {
                let (attended, keys) = att.attend(layer, h)?;
                let features = if matches!(source, SimilaritySource::Keys(_)) { &keys } else { &attended };
                let pairs = bipartite_soft_matching(features, r)?;
                *h = attended;
                pairs
            }
            _ => unreachable!("attention sources always carry hidden state"),
        };
        let stage = MergeStage::new(cur.len(), pairs.iter().map(|p| (p.a, p.b)).collect())?;
        if let (Some(att), Some(h)) = (source.stage(), hidden.as_mut()) {
            let merged = merge_rows(h, &cur.sizes, &stage);
            *h = att.feed_forward(layer, &merged)?;
        }
        cur = apply_stage(&cur, &stage)?;
        plan.push(stage)?;
    }
    Ok((cur, plan))
}

/// Runs the attention stack with the schedule's merging and returns only the
/// final hidden states; the throughput benchmark's workload.
pub fn merged_forward<T: Scalar>(
    ts: &TokenSequence<T>,
    schedule: &MergeSchedule,
    stage: &AttentionStage<T>,
) -> Result<(Matrix<T>, Vec<usize>)> {
    schedule.token_counts(ts.len())?;
    let mut h = ts.tokens.clone();
    let mut sizes = ts.sizes.clone();
    let mut counts = vec![h.rows()];
    for (layer, &r) in schedule.merges.iter().enumerate() {
        let (attended, keys) = stage.attend(layer, &h)?;
        h = if r == 0 {
            attended
        } else {
            let pairs = bipartite_soft_matching(&keys, r)?;
            let st = MergeStage::new(attended.rows(), pairs.iter().map(|p| (p.a, p.b)).collect())?;
            let merged = merge_rows(&attended, &sizes, &st);
            sizes = merge_sizes(&sizes, &st);
            merged
        };
        h = stage.feed_forward(layer, &h)?;
        counts.push(h.rows());
    }
    Ok((h, counts))
}

/// `score[i] = sizes[i] / Σ sizes`: how many source patches a token speaks for.
pub fn token_significance<T: Scalar>(ts: &TokenSequence<T>) -> Vec<T> {
    let total = T::from_usize_lossy(ts.n_patches().max(1));
    ts.sizes.iter().map(|&s| T::from_usize_lossy(s) / total).collect()
}

/// Inverts a reorganization by broadcasting each merged token back to all of
/// its constituents. The result has one size-1 token per source patch, in
/// patch order.
pub fn unmerge<T: Scalar>(ts: &TokenSequence<T>, plan: &MergePlan) -> Result<TokenSequence<T>> {
    if ts.len() != plan.n_final() {
        return Err(Error::PlanMismatch(format!("plan yields {} tokens, sequence has {}", plan.n_final(), ts.len())));
    }
    if ts.origin != plan.replay_origins() {
        return Err(Error::PlanMismatch("origin lists disagree with the plan".into()));
    }
    let mut x = ts.tokens.clone();
    for stage in plan.stages.iter().rev() {
        let mut prev = Matrix::zeros(stage.n_before, x.cols());
        for (i, &d) in stage.dest.iter().enumerate() {
            prev.row_mut(i).copy_from_slice(x.row(d));
        }
        x = prev;
    }
    Ok(TokenSequence::unmerged(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[Vec<f64>]) -> TokenSequence<f64> {
        TokenSequence::unmerged(Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn matching_example() {
        let f: Matrix<f64> = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]).unwrap();
        let pairs = bipartite_soft_matching(&f, 1).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].a, pairs[0].b), (0, 1));
        assert!((pairs[0].similarity - 1.0).abs() < 1e-12);
        let both = bipartite_soft_matching(&f, 2).unwrap();
        assert_eq!((both[1].a, both[1].b), (2, 3));
        assert!((both[1].similarity - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_r_is_noop() {
        let ts = seq(&[vec![1.0], vec![2.0], vec![3.0]]);
        assert!(bipartite_soft_matching(&ts.tokens, 0).unwrap().is_empty());
        let (out, plan) = reorganize(&ts, &MergeSchedule::constant(0, 3), SimilaritySource::Tokens).unwrap();
        assert_eq!(out, ts);
        assert_eq!(plan.n_final(), 3);
    }

    #[test]
    fn identical_tokens_pair_up() {
        let f: Matrix<f64> = Matrix::from_rows(&vec![vec![0.3, 0.4]; 7]).unwrap();
        let pairs = bipartite_soft_matching(&f, 3).unwrap();
        let got: Vec<_> = pairs.iter().map(|p| (p.a, p.b)).collect();
        // every A token prefers the lowest-index B token on a tie
        assert_eq!(got, vec![(0, 1), (2, 1), (4, 1)]);
        assert!(pairs.iter().all(|p| (p.similarity - 1.0).abs() < 1e-12));
        assert!(matches!(bipartite_soft_matching(&f, 4), Err(Error::InvalidR { r: 4, n: 7, limit: 3 })));
    }

    #[test]
    fn zero_vectors_are_dissimilar() {
        let f = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.1], vec![-1.0, 0.0]]).unwrap();
        let pairs = bipartite_soft_matching(&f, 1).unwrap();
        assert_eq!((pairs[0].a, pairs[0].b), (2, 1));
        let p2 = bipartite_soft_matching(&f, 2).unwrap();
        assert_eq!(p2[1].similarity, -1.0);
    }

    #[test]
    fn weighted_average() {
        let mut ts = seq(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
        ts.sizes = vec![1, 3];
        ts.origin = vec![vec![0], vec![1, 2, 3]];
        let (out, _) = apply_merge(&ts, &[(0, 1)]).unwrap();
        assert_eq!(out.token(0), &[0.5, 1.5]);
        assert_eq!(out.sizes, vec![4]);
        assert_eq!(out.origin, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn identical_merge_is_fixed_point() {
        let ts = seq(&[vec![0.7, -0.2], vec![0.7, -0.2]]);
        let (out, _) = apply_merge(&ts, &[(0, 1)]).unwrap();
        assert_eq!(out.token(0), &[0.7, -0.2]);
        assert_eq!(out.sizes, vec![2]);
    }

    #[test]
    fn index_reuse_rejected() {
        let ts = seq(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        assert_eq!(apply_merge(&ts, &[(0, 1), (0, 3)]).unwrap_err(), Error::InvalidPair(0, 3));
        assert_eq!(apply_merge(&ts, &[(0, 1), (1, 3)]).unwrap_err(), Error::InvalidPair(1, 3));
    }

    #[test]
    fn shared_destination_averages_group() {
        let mut ts = seq(&[vec![3.0], vec![0.0], vec![6.0], vec![9.0]]);
        ts.sizes = vec![1, 1, 2, 1];
        ts.origin = vec![vec![0], vec![1], vec![2, 4], vec![3]];
        let (out, _) = apply_merge(&ts, &[(2, 1), (0, 1)]).unwrap();
        assert_eq!(out.token(0), &[(3.0 + 0.0 + 12.0) / 4.0]);
        assert_eq!(out.sizes, vec![4, 1]);
        assert_eq!(out.origin, vec![vec![0, 1, 2, 4], vec![3]]);
    }

    #[test]
    fn eight_pairs_from_196() {
        let rows: Vec<Vec<f64>> = (0..196).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()]).collect();
        let ts = seq(&rows);
        let pairs = bipartite_soft_matching(&ts.tokens, 8).unwrap();
        let flat: Vec<_> = pairs.iter().map(|p| (p.a, p.b)).collect();
        let (out, _) = apply_merge(&ts, &flat).unwrap();
        assert_eq!(out.len(), 188);
        assert_eq!(out.n_patches(), 196);
        out.validate().unwrap();
    }

    #[test]
    fn significance() {
        let mut ts = seq(&[vec![0.0], vec![0.0], vec![0.0]]);
        let uniform = token_significance(&ts);
        assert!(uniform.iter().all(|&s| (s - 1.0 / 3.0).abs() < 1e-12));
        ts.sizes = vec![4, 1, 2];
        let s = token_significance(&ts);
        assert!(s[0] > s[2] && s[2] > s[1]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (one, _) = knn_merge(&seq(&[vec![1.0], vec![1.0], vec![1.0]]), 2, 1).unwrap();
        assert_eq!(token_significance(&one), vec![1.0]);
    }

    #[test]
    fn unmerge_broadcasts() {
        let mut ts = seq(&[vec![2.0, 0.0], vec![5.0, 5.0], vec![0.0, 2.0]]);
        ts.sizes = vec![1, 1, 1];
        let (merged, stage) = apply_merge(&ts, &[(0, 2)]).unwrap();
        let mut plan = MergePlan::empty(3);
        plan.push(stage).unwrap();
        let back = unmerge(&merged, &plan).unwrap();
        assert_eq!(back.token(0), &[1.0, 1.0]);
        assert_eq!(back.token(2), &[1.0, 1.0]);
        assert_eq!(back.token(1), &[5.0, 5.0]);
        assert_eq!(back.sizes, vec![1, 1, 1]);
        assert!(matches!(unmerge(&ts, &plan), Err(Error::PlanMismatch(_))));
    }

    #[test]
    fn reorganize_budgets() {
        let rows: Vec<Vec<f64>> = (0..196).map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.11).cos(), 0.5]).collect();
        let ts = seq(&rows);
        let (out, plan) = reorganize(&ts, &build_schedule(196, 30, 12).unwrap(), SimilaritySource::Tokens).unwrap();
        assert_eq!(out.len(), 30);
        assert_eq!(out.n_patches(), 196);
        assert_eq!(plan.replay_origins(), out.origin);
        let (out, _) = reorganize(&ts, &MergeSchedule::constant(8, 12), SimilaritySource::Tokens).unwrap();
        assert_eq!(out.len(), 100);
        let (out, plan) = reorganize(&ts, &MergeSchedule::default(), SimilaritySource::Tokens).unwrap();
        assert_eq!(out, ts);
        assert!(plan.stages.is_empty());
        assert_eq!(unmerge(&out, &plan).unwrap(), ts);
    }

    #[test]
    fn attention_guided_reorganize() {
        let stage = AttentionStage::<f64>::new(4, 2, 4, 5).unwrap();
        let rows: Vec<Vec<f64>> = (0..20).map(|i| (0..8).map(|c| ((i * 8 + c) as f64 * 0.37).sin()).collect()).collect();
        let ts = seq(&rows);
        let sched = build_schedule(20, 6, 4).unwrap();
        for source in [SimilaritySource::Keys(&stage), SimilaritySource::Hidden(&stage)] {
            let (out, plan) = reorganize(&ts, &sched, source).unwrap();
            assert_eq!(out.len(), 6);
            out.validate().unwrap();
            // the transmitted tokens are weighted averages of the inputs
            let back = unmerge(&out, &plan).unwrap();
            assert_eq!(back.len(), 20);
        }
        let (h, counts) = merged_forward(&ts, &sched, &stage).unwrap();
        assert_eq!(h.rows(), 6);
        assert_eq!(counts, sched.token_counts(20).unwrap());
        assert!(reorganize(&ts, &build_schedule(20, 6, 3).unwrap(), SimilaritySource::Keys(&stage)).is_err());
    }
}
