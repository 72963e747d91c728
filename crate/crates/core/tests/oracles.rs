//! Independent reference implementations checked against the library.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semcode_core::metrics::ssim;
use semcode_core::quantizer::{entropy_decode, entropy_encode, train_codebook, vq_encode, FrequencyModel, QuantizedStream};
use semcode_core::reorganizer::{apply_merge, bipartite_soft_matching, knn_merge, reorganize, unmerge, MergeSchedule, SimilaritySource};
use semcode_core::{ImageBuffer, Matrix, TokenSequence};

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return -1.0;
    }
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / (nx * ny)
}

const TIE: f64 = 1e-9;

/// Each even row links to its most similar odd row (first maximum); then the
/// r strongest links are picked one at a time by linear scan, earliest A
/// winning ties. Similarities closer than 1e-9 are ties.
fn matching_oracle(rows: &[Vec<f64>], r: usize) -> Vec<(usize, usize, f64)> {
    let mut links = Vec::new();
    for a in (0..rows.len()).step_by(2) {
        let mut best: Option<(usize, f64)> = None;
        for b in (1..rows.len()).step_by(2) {
            let s = cosine(&rows[a], &rows[b]);
            if best.is_none_or(|(_, bs)| s > bs + TIE) {
                best = Some((b, s));
            }
        }
        let (b, s) = best.unwrap();
        links.push((a, b, s));
    }
    let mut out = Vec::new();
    let mut taken = vec![false; links.len()];
    for _ in 0..r {
        let mut pick: Option<usize> = None;
        for (i, l) in links.iter().enumerate() {
            if !taken[i] && pick.is_none_or(|p| l.2 > links[p].2 + TIE) {
                pick = Some(i);
            }
        }
        let p = pick.unwrap();
        taken[p] = true;
        out.push(links[p]);
    }
    out
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    match rng.gen_range(0..3) {
        // continuous
        0 => (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
        // few distinct vectors, lots of exact ties
        1 => {
            let palette: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            (0..n).map(|_| palette[rng.gen_range(0..3)].clone()).collect()
        }
        // occasional zero vectors
        _ => (0..n)
            .map(|_| {
                if rng.gen_bool(0.25) {
                    vec![0.0; d]
                } else {
                    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
                }
            })
            .collect(),
    }
}

#[test]
fn matching_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let n = rng.gen_range(2..=12);
        let d = rng.gen_range(1..=5);
        let rows = random_rows(&mut rng, n, d);
        let r = rng.gen_range(0..=n / 2);
        let got = bipartite_soft_matching(&Matrix::from_rows(&rows).unwrap(), r).unwrap();
        let want = matching_oracle(&rows, r);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((g.a, g.b), (w.0, w.1), "rows {rows:?} r {r}");
            assert!((g.similarity - w.2).abs() < 1e-12);
        }
    }
}

fn naive_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut mx, mut my) = (0.0, 0.0);
            for dy in 0..11 {
                for dx in 0..11 {
                    let wgt = g[dy] * g[dx] / (gs * gs);
                    mx += wgt * a[(y0 + dy) * w + x0 + dx];
                    my += wgt * b[(y0 + dy) * w + x0 + dx];
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..11 {
                for dx in 0..11 {
                    let wgt = g[dy] * g[dx] / (gs * gs);
                    let p = a[(y0 + dy) * w + x0 + dx] - mx;
                    let q = b[(y0 + dy) * w + x0 + dx] - my;
                    vx += wgt * p * p;
                    vy += wgt * q * q;
                    cov += wgt * p * q;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_direct_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (w, h) in [(11, 11), (16, 13), (24, 20)] {
        let a: Vec<u8> = (0..w * h).map(|i| ((i * 7) % 256) as u8 ^ (rng.gen::<u8>() / 4)).collect();
        let b: Vec<u8> = a.iter().map(|&v| v.saturating_add(rng.gen_range(0..40))).collect();
        let ia = ImageBuffer::new(w, h, 1, a.clone()).unwrap();
        let ib = ImageBuffer::new(w, h, 1, b.clone()).unwrap();
        let fa: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
        let fb: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
        let want = naive_ssim(&fa, &fb, w, h);
        let got = ssim(&ia, &ib).unwrap();
        assert!((got - want).abs() < 1e-9, "{w}x{h}: {got} vs {want}");
    }
}

#[test]
fn ssim_landmarks() {
    let checker: Vec<u8> = (0..32 * 32).map(|i| if (i / 32 + i % 32) % 2 == 0 { 40 } else { 215 }).collect();
    let negated: Vec<u8> = checker.iter().map(|&v| 255 - v).collect();
    let a = ImageBuffer::new(32, 32, 1, checker).unwrap();
    let b = ImageBuffer::new(32, 32, 1, negated).unwrap();
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    assert!(ssim(&a, &b).unwrap() < 0.5);
}

#[test]
fn vq_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let corpus = Matrix::from_rows(&(0..300).map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect::<Vec<Vec<f64>>>()).unwrap();
    let cb = train_codebook(&corpus, 16, 30, 5).unwrap();
    let probes: Vec<Vec<f64>> = (0..2000).map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    let qs = vq_encode(&Matrix::from_rows(&probes).unwrap(), &cb).unwrap();
    for (v, &got) in probes.iter().zip(&qs.symbols) {
        let mut best = (0, f64::INFINITY);
        for k in 0..cb.len() {
            let d: f64 = cb.centroids.row(k).iter().zip(v).map(|(c, x)| (c - x) * (c - x)).sum();
            if d < best.1 {
                best = (k, d);
            }
        }
        assert_eq!(got as usize, best.0);
    }
}

#[test]
fn kmeans_history_matches_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for trial in 0..10 {
        let rows: Vec<Vec<f64>> = (0..120).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let cb = train_codebook(&m, 6, 40, trial).unwrap();
        for w in cb.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // final distortion is the k-means objective of the returned centroids
        let direct: f64 = rows
            .iter()
            .map(|v| {
                (0..cb.len())
                    .map(|k| cb.centroids.row(k).iter().zip(v).map(|(c, x)| (c - x) * (c - x)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / rows.len() as f64;
        assert!((direct - cb.distortion).abs() <= 1e-9 * direct.max(1.0), "{direct} vs {}", cb.distortion);
    }
}

#[test]
fn coded_length_tracks_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for alphabet in [2u32, 16, 256] {
        let symbols: Vec<u32> = (0..10_000).map(|_| rng.gen_range(0..alphabet)).collect();
        let qs = QuantizedStream::new(alphabet, symbols).unwrap();
        let fm = FrequencyModel::fit(&qs).unwrap();
        let bits = entropy_encode(&qs, &fm).unwrap();
        let ideal = fm.cross_entropy_bits(&qs);
        assert!((bits.n_bits as f64) <= ideal + 32.0, "{} > {ideal} + 32", bits.n_bits);
        assert_eq!(entropy_decode(&bits, qs.len(), &fm).unwrap(), qs);
    }
}

fn tokens(rows: Vec<Vec<f64>>) -> TokenSequence<f64> {
    TokenSequence::unmerged(Matrix::from_rows(&rows).unwrap())
}

proptest! {
    #[test]
    fn reorganize_conserves_patches(
        seed in any::<u64>(),
        n in 2usize..48,
        d in 1usize..5,
        stages in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = tokens((0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect());
        let mut left = n;
        let merges: Vec<usize> = (0..stages).map(|_| {
            let r = rng.gen_range(0..=(left / 2).min(left - 1));
            left -= r;
            r
        }).collect();
        let (out, plan) = reorganize(&ts, &MergeSchedule { merges }, SimilaritySource::Tokens).unwrap();
        prop_assert_eq!(out.len(), left);
        prop_assert_eq!(out.sizes.iter().sum::<usize>(), n);
        out.validate().unwrap();
        prop_assert_eq!(&plan.replay_origins(), &out.origin);
        let back = unmerge(&out, &plan).unwrap();
        prop_assert_eq!(back.len(), n);
        for (i, group) in out.origin.iter().enumerate() {
            for &p in group {
                prop_assert_eq!(back.token(p), out.token(i));
            }
        }
    }

    #[test]
    fn merged_token_is_weighted_mean_of_sources(seed in any::<u64>(), n in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = tokens((0..n).map(|_| vec![rng.gen_range(-5.0..5.0)]).collect());
        let (out, plan) = reorganize(&ts, &MergeSchedule { merges: vec![n / 2] }, SimilaritySource::Tokens).unwrap();
        for (i, group) in out.origin.iter().enumerate() {
            let mean = group.iter().map(|&p| ts.token(p)[0]).sum::<f64>() / group.len() as f64;
            prop_assert!((out.token(i)[0] - mean).abs() < 1e-9);
        }
        prop_assert_eq!(plan.n_final(), n - n / 2);
    }

    #[test]
    fn knn_reaches_target(seed in any::<u64>(), n in 1usize..30, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = tokens((0..n).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect());
        let target = rng.gen_range(1..=n);
        let (out, plan) = knn_merge(&ts, k, target).unwrap();
        prop_assert_eq!(out.len(), target);
        out.validate().unwrap();
        prop_assert_eq!(unmerge(&out, &plan).unwrap().len(), n);
    }

    #[test]
    fn explicit_pairs_conserve(seed in any::<u64>(), n in 2usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = tokens((0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect());
        let pairs: Vec<(usize, usize)> = (0..n / 2).filter(|_| rng.gen_bool(0.5)).map(|i| (2 * i, 2 * i + 1)).collect();
        let (out, stage) = apply_merge(&ts, &pairs).unwrap();
        prop_assert_eq!(out.len(), n - pairs.len());
        prop_assert_eq!(out.n_patches(), n);
        prop_assert_eq!(stage.n_after(), out.len());
    }
}
