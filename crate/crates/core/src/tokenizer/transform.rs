use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, Scalar};
use crate::tokens::TokenSequence;
use crate::wire::{narrow, put_f32, put_u16, put_u32, Reader};

const MAGIC: &[u8; 4] = b"SCAT";
const VERSION: u16 = 1;

/// Orthonormal linear analysis transform (PCA) and its transpose synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisTransform<T> {
    pub patch_size: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × in_dim`, orthonormal rows.
    pub basis: Matrix<T>,
    pub mean: Vec<T>,
}

/// A learned transform together with the full covariance spectrum, descending.
#[derive(Debug, Clone)]
pub struct PcaFit<T> {
    pub transform: AnalysisTransform<T>,
    pub eigenvalues: Vec<f64>,
}

impl<T> PcaFit<T> {
    /// Fraction of corpus variance kept by the retained directions; `None`
    /// when the corpus has (numerically) zero variance.
    pub fn energy_captured(&self, out_dim: usize) -> Option<f64> {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        (total > 1e-20).then(|| self.eigenvalues[..out_dim].iter().map(|v| v.max(0.0)).sum::<f64>() / total)
    }
}

/// Learns a PCA transform from a corpus of patch vectors (one per row).
///
/// Statistics are accumulated in `f64` regardless of `T`. Eigenvectors are
/// sign-normalized so their largest-magnitude component is positive, which
/// makes the basis reproducible across runs.
pub fn learn_analysis_transform<T: Scalar>(
    patches: &Matrix<T>,
    out_dim: usize,
    patch_size: usize,
) -> Result<PcaFit<T>> {
    let (n, in_dim) = (patches.rows(), patches.cols());
    if out_dim == 0 || out_dim > in_dim {
        return Err(Error::InsufficientData(format!(
            "token dimension {out_dim} must be in 1..={in_dim}"
        )));
    }
    if n < out_dim {
        return Err(Error::InsufficientData(format!(
            "{n} training patches for {out_dim} output dimensions"
        )));
    }
    let x = DMatrix::from_row_iterator(n, in_dim, patches.as_slice().iter().map(|v| v.as_f64()));
    let mean = x.row_mean();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.tr_mul(&centered) / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..in_dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut basis = Matrix::zeros(out_dim, in_dim);
    for (r, &k) in order.iter().take(out_dim).enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = v.iter().fold(0.0f64, |best, &c| if c.abs() > best.abs() { c } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (dst, &c) in basis.row_mut(r).iter_mut().zip(v.iter()) {
            *dst = T::lit(sign * c);
        }
    }
    let transform = AnalysisTransform {
        patch_size,
        in_dim,
        out_dim,
        basis,
        mean: mean.iter().map(|&m| T::lit(m)).collect(),
    };
    Ok(PcaFit { transform, eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect() })
}

/// `token[i] = basis · (patch[i] − mean)`; every token starts with size 1.
pub fn analyze<T: Scalar>(patches: &Matrix<T>, t: &AnalysisTransform<T>) -> Result<TokenSequence<T>> {
    if patches.cols() != t.in_dim {
        return Err(Error::DimensionMismatch(format!(
            "patch length {} but transform expects {}",
            patches.cols(),
            t.in_dim
        )));
    }
    let mut tokens = Matrix::zeros(patches.rows(), t.out_dim);
    let mut centered = vec![T::zero(); t.in_dim];
    for i in 0..patches.rows() {
        for ((c, &p), &m) in centered.iter_mut().zip(patches.row(i)).zip(&t.mean) {
            *c = p - m;
        }
        for (k, dst) in tokens.row_mut(i).iter_mut().enumerate() {
            *dst = dot(t.basis.row(k), &centered);
        }
    }
    Ok(TokenSequence::unmerged(tokens))
}

/// Reconstructs one patch per source index; merged tokens are broadcast to
/// every patch in their origin list.
pub fn synthesize<T: Scalar>(ts: &TokenSequence<T>, t: &AnalysisTransform<T>) -> Result<Matrix<T>> {
    if ts.dim() != t.out_dim {
        return Err(Error::DimensionMismatch(format!(
            "token dimension {} but transform produces {}",
            ts.dim(),
            t.out_dim
        )));
    }
    let n_patches = ts.origin.iter().flatten().copied().max().map_or(0, |m| m + 1);
    let mut covered = vec![false; n_patches];
    let mut out = Matrix::zeros(n_patches, t.in_dim);
    let mut recon = vec![T::zero(); t.in_dim];
    for i in 0..ts.len() {
        recon.copy_from_slice(&t.mean);
        for (k, &coef) in ts.token(i).iter().enumerate() {
            for (r, &b) in recon.iter_mut().zip(t.basis.row(k)) {
                *r = *r + coef * b;
            }
        }
        for &j in &ts.origin[i] {
            out.row_mut(j).copy_from_slice(&recon);
            covered[j] = true;
        }
    }
    if let Some(j) = covered.iter().position(|c| !c) {
        return Err(Error::CoverageGap(j));
    }
    Ok(out)
}

impl<T: Scalar> AnalysisTransform<T> {
    pub fn channels(&self) -> usize {
        self.in_dim / (self.patch_size * self.patch_size).max(1)
    }

    /// Serializes to the `SCAT` container (f32 payload).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(16 + 4 * self.in_dim * (self.out_dim + 1));
        out.extend_from_slice(MAGIC);
        put_u16(&mut out, VERSION);
        put_u16(&mut out, narrow(self.patch_size, "patch_size")?);
        put_u32(&mut out, narrow(self.in_dim, "in_dim")?);
        put_u32(&mut out, narrow(self.out_dim, "out_dim")?);
        for &m in &self.mean {
            put_f32(&mut out, m.as_f32());
        }
        for &b in self.basis.as_slice() {
            put_f32(&mut out, b.as_f32());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "transform file");
        r.magic(MAGIC)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported transform version {version}")));
        }
        let patch_size = usize::from(r.u16()?);
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        if patch_size == 0 || out_dim == 0 || out_dim > in_dim || !in_dim.is_multiple_of(patch_size * patch_size) {
            return Err(Error::Format(format!(
                "inconsistent transform header (p={patch_size}, in={in_dim}, out={out_dim})"
            )));
        }
        let expected = 4 * in_dim * (out_dim + 1);
        if r.remaining() != expected {
            return Err(Error::Format(format!("transform payload is {} bytes, expected {expected}", r.remaining())));
        }
        let mean = (0..in_dim).map(|_| r.f32().map(|v| T::lit(f64::from(v)))).collect::<Result<Vec<_>>>()?;
        let basis = (0..in_dim * out_dim).map(|_| r.f32().map(|v| T::lit(f64::from(v)))).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(AnalysisTransform { patch_size, in_dim, out_dim, basis: Matrix::from_vec(out_dim, in_dim, basis)?, mean })
    }
}
