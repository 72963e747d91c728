//! The token sequence that flows through the whole pipeline.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Token vectors with their constituent counts and the source patches each
/// token stands for.
///
/// `sizes[i] == origin[i].len()` and the origin lists partition
/// `0..n_patches()`; merging preserves both.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence<T> {
    pub tokens: Matrix<T>,
    pub sizes: Vec<usize>,
    pub origin: Vec<Vec<usize>>,
}

impl<T: Scalar> TokenSequence<T> {
    /// One token per patch, in patch order.
    pub fn unmerged(tokens: Matrix<T>) -> Self {
        let n = tokens.rows();
        TokenSequence { tokens, sizes: vec![1; n], origin: (0..n).map(|i| vec![i]).collect() }
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    /// Number of source patches represented, i.e. `Σ sizes`.
    pub fn n_patches(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn token(&self, i: usize) -> &[T] {
        self.tokens.row(i)
    }

    /// Checks the size/origin bookkeeping.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.sizes.len() != n || self.origin.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} tokens but {} sizes and {} origin lists",
                self.sizes.len(),
                self.origin.len()
            )));
        }
        let total = self.n_patches();
        let mut seen = vec![false; total];
        for (i, (o, &s)) in self.origin.iter().zip(&self.sizes).enumerate() {
            if s == 0 || o.len() != s {
                return Err(Error::DimensionMismatch(format!(
                    "token {i} has size {s} but {} origins",
                    o.len()
                )));
            }
            for &p in o {
                if p >= total || seen[p] {
                    return Err(Error::DimensionMismatch(format!(
                        "patch {p} is out of range or claimed twice"
                    )));
                }
                seen[p] = true;
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(Error::CoverageGap(p));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unmerged_is_valid() {
        let ts = TokenSequence::unmerged(Matrix::<f64>::zeros(5, 3));
        ts.validate().unwrap();
        assert_eq!(ts.n_patches(), 5);
    }

    #[test]
    fn detects_duplicate_origin() {
        let mut ts = TokenSequence::unmerged(Matrix::<f64>::zeros(3, 2));
        ts.origin[2] = vec![1];
        assert!(ts.validate().is_err());
    }
}
