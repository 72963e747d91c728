use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::tokens::TokenSequence;

const FFN_EXPANSION: usize = 4;
const LN_EPS: f64 = 1e-6;

/// Weights of one pre-norm transformer block. Row-vector convention: `y = x·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer<T> {
    pub query: Matrix<T>,
    pub key: Matrix<T>,
    pub value: Matrix<T>,
    pub output: Matrix<T>,
    pub expand: Matrix<T>,
    pub contract: Matrix<T>,
}

/// Seeded, untrained multi-head self-attention stack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStage<T> {
    pub n_heads: usize,
    pub head_dim: usize,
    pub layers: Vec<AttentionLayer<T>>,
    pub seed: u64,
}

/// `rows × cols` matrix with orthonormal rows (if rows ≤ cols) or columns.
fn orthogonal<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let (short, long) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(short);
    while vecs.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        // two passes of Gram-Schmidt for numerical orthogonality
        for _ in 0..2 {
            for u in &vecs {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            vecs.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    let m = Matrix::from_rows(&vecs).expect("equal lengths").cast::<T>();
    if rows <= cols {
        m
    } else {
        m.transpose()
    }
}

fn layer_norm<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let d = T::from_usize_lossy(x.cols());
    let mut out = x.clone();
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().copied().sum::<T>() / d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
        let inv = T::one() / (var + T::lit(LN_EPS)).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    out
}

fn gelu<T: Scalar>(x: T) -> T {
    // tanh approximation
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    T::lit(0.5) * x * (T::one() + (c * (x + T::lit(0.044715) * x * x * x)).tanh())
}

fn add_assign<T: Scalar>(acc: &mut Matrix<T>, rhs: &Matrix<T>) {
    for i in 0..acc.rows() {
        acc.row_mut(i).iter_mut().zip(rhs.row(i)).for_each(|(a, &b)| *a = *a + b);
    }
}

impl<T: Scalar> AttentionStage<T> {
    /// Draws every projection from `seed`; identical seeds give identical weights.
    pub fn new(n_layers: usize, n_heads: usize, head_dim: usize, seed: u64) -> Result<Self> {
        if n_heads == 0 || head_dim == 0 {
            return Err(Error::InvalidDimensions("attention needs at least one head of width ≥ 1".into()));
        }
        let d = n_heads * head_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..n_layers)
            .map(|_| AttentionLayer {
                query: orthogonal(d, d, &mut rng),
                key: orthogonal(d, d, &mut rng),
                value: orthogonal(d, d, &mut rng),
                output: orthogonal(d, d, &mut rng),
                expand: orthogonal(d, FFN_EXPANSION * d, &mut rng),
                contract: orthogonal(FFN_EXPANSION * d, d, &mut rng),
            })
            .collect();
        Ok(AttentionStage { n_heads, head_dim, layers, seed })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.n_heads * self.head_dim
    }

    fn check(&self, layer: usize, x: &Matrix<T>) -> Result<&AttentionLayer<T>> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "token dimension {} but attention width is {}×{}",
                x.cols(),
                self.n_heads,
                self.head_dim
            )));
        }
        self.layers
            .get(layer)
            .ok_or_else(|| Error::DimensionMismatch(format!("layer {layer} of {}", self.layers.len())))
    }

    /// Per-head attention probabilities (`N × N`, rows sum to 1) of one layer.
    pub fn attention_weights(&self, layer: usize, x: &Matrix<T>) -> Result<Vec<Matrix<T>>> {
        let w = self.check(layer, x)?;
        let h = layer_norm(x);
        let q = h.matmul(&w.query)?;
        let k = h.matmul(&w.key)?;
        Ok((0..self.n_heads).map(|head| self.head_probs(&q, &k, head)).collect())
    }

    fn head_probs(&self, q: &Matrix<T>, k: &Matrix<T>, head: usize) -> Matrix<T> {
        let n = q.rows();
        let cols = head * self.head_dim..(head + 1) * self.head_dim;
        let scale = T::one() / T::from_usize_lossy(self.head_dim).sqrt();
        let mut probs = Matrix::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[cols.clone()];
            let row = probs.row_mut(i);
            for (j, dst) in row.iter_mut().enumerate() {
                *dst = crate::scalar::dot(qi, &k.row(j)[cols.clone()]) * scale;
            }
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            row.iter_mut().for_each(|v| *v = *v / sum);
        }
        probs
    }

    /// Attention half of a block: `x + MHSA(LN(x))`. Also returns the keys
    /// averaged over heads (`N × head_dim`), the similarity space for merging.
    pub fn attend(&self, layer: usize, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let w = self.check(layer, x)?;
        let n = x.rows();
        let h = layer_norm(x);
        let q = h.matmul(&w.query)?;
        let k = h.matmul(&w.key)?;
        let v = h.matmul(&w.value)?;
        let mut mixed = Matrix::zeros(n, self.dim());
        for head in 0..self.n_heads {
            let probs = self.head_probs(&q, &k, head);
            let cols = head * self.head_dim..(head + 1) * self.head_dim;
            for i in 0..n {
                let p = probs.row(i);
                let dst = &mut mixed.row_mut(i)[cols.clone()];
                for (j, &pij) in p.iter().enumerate() {
                    for (d, &vj) in dst.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *d = *d + pij * vj;
                    }
                }
            }
        }
        let mut out = mixed.matmul(&w.output)?;
        add_assign(&mut out, x);

        let inv_heads = T::one() / T::from_usize_lossy(self.n_heads);
        let mut keys = Matrix::zeros(n, self.head_dim);
        for i in 0..n {
            let src = k.row(i);
            for (c, dst) in keys.row_mut(i).iter_mut().enumerate() {
                *dst = (0..self.n_heads).map(|hh| src[hh * self.head_dim + c]).sum::<T>() * inv_heads;
            }
        }
        Ok((out, keys))
    }

    /// Feed-forward half of a block: `x + W₂·GELU(W₁·LN(x))`.
    pub fn feed_forward(&self, layer: usize, x: &Matrix<T>) -> Result<Matrix<T>> {
        let w = self.check(layer, x)?;
        let hidden = layer_norm(x).matmul(&w.expand)?.map(gelu);
        let mut out = hidden.matmul(&w.contract)?;
        add_assign(&mut out, x);
        Ok(out)
    }
}

/// Runs every block of `stage` without merging. Sizes and origins pass through;
/// the returned keys are those of the last block.
pub fn attention_forward<T: Scalar>(
    ts: &TokenSequence<T>,
    stage: &AttentionStage<T>,
) -> Result<(TokenSequence<T>, Matrix<T>)> {
    if ts.dim() != stage.dim() {
        return Err(Error::DimensionMismatch(format!(
            "token dimension {} but attention width is {}",
            ts.dim(),
            stage.dim()
        )));
    }
    let mut x = ts.tokens.clone();
    let mut keys = Matrix::zeros(ts.len(), stage.head_dim);
    for layer in 0..stage.n_layers() {
        let (attended, k) = stage.attend(layer, &x)?;
        x = stage.feed_forward(layer, &attended)?;
        keys = k;
    }
    Ok((TokenSequence { tokens: x, sizes: ts.sizes.clone(), origin: ts.origin.clone() }, keys))
}
