use std::cmp::Ordering;

use super::{apply_stage, MergePlan, MergeStage};
use crate::error::{Error, Result};
use crate::scalar::{cosine, Scalar};
use crate::tokens::TokenSequence;

/// Greedy agglomeration restricted to k-nearest-neighbor candidates.
///
/// Each round every token nominates its `k` most cosine-similar peers; the
/// single most similar nominated pair is merged (size-weighted), ties going to
/// the lexicographically lower `(i, j)`. Every round becomes a one-pair stage
/// of the returned plan.
pub fn knn_merge<T: Scalar>(ts: &TokenSequence<T>, k: usize, n_target: usize) -> Result<(TokenSequence<T>, MergePlan)> {
    if n_target == 0 || n_target > ts.len() {
        return Err(Error::Infeasible(format!("cannot reduce {} tokens to {n_target}", ts.len())));
    }
    if k == 0 {
        return Err(Error::Infeasible("k-NN merging needs k ≥ 1".into()));
    }
    let mut cur = ts.clone();
    let mut plan = MergePlan::empty(ts.len());
    let n = cur.len();
    let mut sim: Vec<Vec<T>> = (0..n).map(|i| (0..n).map(|j| cosine(cur.token(i), cur.token(j))).collect()).collect();

    let mut neighbors: Vec<usize> = Vec::with_capacity(n);
    while cur.len() > n_target {
        let n = cur.len();
        let mut best: Option<(T, usize, usize)> = None;
        for i in 0..n {
            neighbors.clear();
            neighbors.extend((0..n).filter(|&j| j != i));
            let by_sim = |x: &usize, y: &usize| sim[i][*y].partial_cmp(&sim[i][*x]).unwrap_or(Ordering::Equal).then(x.cmp(y));
            if neighbors.len() > k {
                neighbors.select_nth_unstable_by(k - 1, by_sim);
                neighbors.truncate(k);
            }
            for &j in &neighbors {
                let (lo, hi) = (i.min(j), i.max(j));
                let s = sim[i][j];
                let better = match best {
                    None => true,
                    Some((bs, bi, bj)) => s > bs || (s == bs && (lo, hi) < (bi, bj)),
                };
                if better {
                    best = Some((s, lo, hi));
                }
            }
        }
        let (_, i, j) = best.expect("at least two tokens remain");
        let stage = MergeStage::new(n, vec![(i, j)])?;
        cur = apply_stage(&cur, &stage)?;
        plan.push(stage)?;

        // j's slot disappears; the merged token lives at i
        sim.remove(j);
        for row in sim.iter_mut() {
            row.remove(j);
        }
        for other in 0..cur.len() {
            let s = cosine(cur.token(i), cur.token(other));
            sim[i][other] = s;
            sim[other][i] = s;
        }
    }
    Ok((cur, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn seq(rows: &[Vec<f64>]) -> TokenSequence<f64> {
        TokenSequence::unmerged(Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn two_clusters() {
        let ts = seq(&[vec![1.0, 0.01], vec![0.0, 1.0], vec![1.0, -0.01], vec![0.02, 1.0]]);
        let (out, plan) = knn_merge(&ts, 2, 2).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.origin, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(out.token(0), &[1.0, 0.0]);
        assert_eq!(out.token(1), &[0.01, 1.0]);
        assert_eq!(plan.stages.len(), 2);
    }

    #[test]
    fn target_equal_to_len_is_identity() {
        let ts = seq(&[vec![1.0], vec![-1.0]]);
        let (out, plan) = knn_merge(&ts, 1, 2).unwrap();
        assert_eq!(out, ts);
        assert!(plan.stages.is_empty());
    }

    #[test]
    fn all_identical_collapse() {
        let ts = seq(&vec![vec![0.5, 0.5]; 6]);
        let (out, _) = knn_merge(&ts, 3, 1).unwrap();
        assert_eq!(out.sizes, vec![6]);
        assert_eq!(out.token(0), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_targets() {
        let ts = seq(&[vec![1.0], vec![2.0]]);
        assert!(matches!(knn_merge(&ts, 1, 0), Err(Error::Infeasible(_))));
        assert!(matches!(knn_merge(&ts, 1, 3), Err(Error::Infeasible(_))));
        assert!(matches!(knn_merge(&ts, 0, 1), Err(Error::Infeasible(_))));
    }
}
