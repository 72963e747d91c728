use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::QuantizedStream;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{squared_distance, Scalar};
use crate::wire::{narrow, put_f32, put_u16, put_u32, Reader};

const MAGIC: &[u8; 4] = b"SCCB";
const VERSION: u16 = 1;
const REL_TOL: f64 = 1e-9;

/// K centroids learned by k-means.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    pub centroids: Matrix<T>,
    /// Lloyd updates performed.
    pub iterations: usize,
    /// Mean squared distortion of the final assignment.
    pub distortion: f64,
    /// Distortion after each assignment step; empty for loaded codebooks.
    pub history: Vec<f64>,
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn assign(data: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(data.len());
    let mut dists = Vec::with_capacity(data.len());
    for x in data {
        let (k, d) = nearest(x, centroids);
        labels.push(k);
        dists.push(d);
    }
    let mean = dists.iter().sum::<f64>() / data.len() as f64;
    (labels, dists, mean)
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// Stops after `max_iters` updates or once the relative distortion change
/// drops below 1e-9. Empty or duplicated centroids are re-seeded at the point
/// currently worst served, so every centroid stays distinct.
pub fn train_codebook<T: Scalar>(vectors: &Matrix<T>, k: usize, max_iters: usize, seed: u64) -> Result<Codebook<T>> {
    let n = vectors.rows();
    if k == 0 || n < k {
        return Err(Error::InsufficientData(format!("{n} vectors for a codebook of {k}")));
    }
    let data: Vec<Vec<f64>> = vectors.iter_rows().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = vec![data[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| nearest(x, &centroids).1).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::InsufficientData(format!("fewer than {k} distinct vectors")));
        }
        let mut target = rng.gen_range(0.0..total);
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        if d2[pick] == 0.0 {
            // floating-point edge: fall back to the farthest point
            pick = (0..n).max_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(b.cmp(&a))).unwrap();
        }
        let c = data[pick].clone();
        for (x, d) in data.iter().zip(d2.iter_mut()) {
            let nd: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            *d = d.min(nd);
        }
        centroids.push(c);
    }

    let dim = vectors.cols();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let (labels, dists, distortion) = assign(&data, &centroids);
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| (prev - distortion).abs() <= REL_TOL * prev.max(f64::MIN_POSITIVE));
        history.push(distortion);
        if converged || iterations == max_iters || distortion == 0.0 {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        let mut taken = vec![false; n];
        let mut worst: Vec<usize> = (0..n).collect();
        worst.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
        let mut next_worst = worst.into_iter();
        for c in 0..k {
            let duplicate = counts[c] > 0 && {
                let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                let dup = centroids[..c].contains(&mean);
                centroids[c] = mean;
                dup
            };
            if counts[c] == 0 || duplicate {
                let replacement = next_worst
                    .by_ref()
                    .find(|&i| !taken[i] && dists[i] > 0.0 && !centroids.iter().any(|o| *o == data[i]));
                if let Some(i) = replacement {
                    taken[i] = true;
                    centroids[c] = data[i].clone();
                }
            }
        }
        iterations += 1;
    }
    let distortion = *history.last().expect("at least one assignment");
    let centroids = Matrix::from_rows(&centroids)?.cast::<T>();
    Ok(Codebook { centroids, iterations, distortion, history })
}

/// Nearest-centroid index per row (squared Euclidean, ties to the lower index).
pub fn vq_encode<T: Scalar>(vectors: &Matrix<T>, cb: &Codebook<T>) -> Result<QuantizedStream> {
    if vectors.cols() != cb.dim() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} for a codebook of dimension {}",
            vectors.cols(),
            cb.dim()
        )));
    }
    let symbols = vectors.iter_rows().map(|v| cb.nearest(v) as u32).collect();
    QuantizedStream::new(cb.len() as u32, symbols)
}

pub fn vq_decode<T: Scalar>(qs: &QuantizedStream, cb: &Codebook<T>) -> Result<Matrix<T>> {
    if qs.alphabet as usize != cb.len() {
        return Err(Error::DimensionMismatch(format!("alphabet {} for {} centroids", qs.alphabet, cb.len())));
    }
    let idx: Vec<usize> = qs.symbols.iter().map(|&s| s as usize).collect();
    if let Some(&s) = qs.symbols.iter().find(|&&s| s as usize >= cb.len()) {
        return Err(Error::SymbolOutOfRange { symbol: s, alphabet: qs.alphabet });
    }
    Ok(cb.centroids.select_rows(&idx))
}

impl<T: Scalar> Codebook<T> {
    pub fn len(&self) -> usize {
        self.centroids.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn nearest(&self, v: &[T]) -> usize {
        let mut best = (0, T::infinity());
        for (k, c) in self.centroids.iter_rows().enumerate() {
            let d = squared_distance(v, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    /// Smallest Euclidean distance between two distinct centroids.
    pub fn min_separation(&self) -> T {
        let mut best = T::infinity();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(squared_distance(self.centroids.row(i), self.centroids.row(j)));
            }
        }
        best.sqrt()
    }

    /// `SCCB` container: magic, version u16, K u32, dim u32, iterations u32,
    /// distortion f64, centroids as f32, all little-endian.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(26 + 4 * self.centroids.as_slice().len());
        out.extend_from_slice(MAGIC);
        put_u16(&mut out, VERSION);
        put_u32(&mut out, narrow(self.len(), "codebook size")?);
        put_u32(&mut out, narrow(self.dim(), "codebook dimension")?);
        put_u32(&mut out, narrow(self.iterations, "iterations")?);
        out.extend_from_slice(&self.distortion.to_le_bytes());
        for &c in self.centroids.as_slice() {
            put_f32(&mut out, c.as_f32());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "codebook file");
        r.magic(MAGIC)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported codebook version {version}")));
        }
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let iterations = r.u32()? as usize;
        let distortion = r.f64()?;
        if k == 0 || r.remaining() != 4 * k * dim {
            return Err(Error::Format(format!("codebook payload does not hold {k}×{dim} centroids")));
        }
        let data = (0..k * dim).map(|_| r.f32().map(|v| T::lit(f64::from(v)))).collect::<Result<Vec<_>>>()?;
        Ok(Codebook { centroids: Matrix::from_vec(k, dim, data)?, iterations, distortion, history: Vec::new() })
    }
}
