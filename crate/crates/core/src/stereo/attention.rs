use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{FeatureGrid, GridRole, StitchedPair};
use crate::error::{Error, Result};

/// Single-head projections, each `C×C` acting on row tokens (`x·W`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
}

impl AttentionWeights {
    pub fn identity(c: usize) -> Self {
        AttentionWeights {
            wq: DMatrix::identity(c, c),
            wk: DMatrix::identity(c, c),
            wv: DMatrix::identity(c, c),
        }
    }

    /// Gaussian weights with variance `1/C`.
    pub fn random(c: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (c as f64).sqrt();
        let mut m = || {
            DMatrix::from_fn(c, c, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                s * z
            })
        };
        AttentionWeights {
            wq: m(),
            wk: m(),
            wv: m(),
        }
    }

    pub fn channels(&self) -> usize {
        self.wq.nrows()
    }

    fn validate(&self) -> Result<()> {
        let c = self.wq.nrows();
        for m in [&self.wq, &self.wk, &self.wv] {
            if m.nrows() != c || m.ncols() != c {
                return Err(Error::invalid("attention weights must all be CxC"));
            }
        }
        Ok(())
    }
}

/// Tokens of frame `fi` as an `L×C` matrix with `L = H·2W`, row-major over
/// (row, column) of the stitched grid.
pub fn sequence(grid: &FeatureGrid, fi: usize) -> DMatrix<f64> {
    let l = grid.h * grid.w;
    let base = fi * l * grid.c;
    DMatrix::from_row_slice(l, grid.c, &grid.data[base..base + l * grid.c])
}

/// Softmax attention within one sequence.
pub fn attend(x: &DMatrix<f64>, w: &AttentionWeights) -> DMatrix<f64> {
    let c = x.ncols() as f64;
    let q = x * &w.wq;
    let k = x * &w.wk;
    let v = x * &w.wv;
    let mut s = (q * k.transpose()) / c.sqrt();
    for mut row in s.row_iter_mut() {
        let m = row.max();
        row.apply(|e| *e = (*e - m).exp());
        let z = row.sum();
        row /= z;
    }
    s * v
}

/// Constrained stereo attention: every (pair, frame) is an independent
/// sequence of the `H·2W` stitched tokens, so nothing crosses pairs or
/// frames. Returns the target (left) half of each pair's output.
pub fn ssm_attention(
    pairs: &[StitchedPair],
    weights: &AttentionWeights,
) -> Result<Vec<FeatureGrid>> {
    weights.validate()?;
    let Some(first) = pairs.first() else {
        return Ok(Vec::new());
    };
    let (f, h, w2, c) = first.ssm_input.dims();
    if c != weights.channels() {
        return Err(Error::invalid(format!(
            "weights act on {} channels, grids carry {c}",
            weights.channels()
        )));
    }
    if pairs.iter().any(|p| p.ssm_input.dims() != (f, h, w2, c)) || w2 % 2 != 0 {
        return Err(Error::invalid(
            "stitched pairs must share dims with even width",
        ));
    }
    let w = w2 / 2;
    // [B, F, H, 2W, C] -> [B·F, H·2W, C]
    let outputs: Vec<DMatrix<f64>> = (0..pairs.len() * f)
        .into_par_iter()
        .map(|bf| attend(&sequence(&pairs[bf / f].ssm_input, bf % f), weights))
        .collect();
    Ok((0..pairs.len())
        .map(|b| {
            FeatureGrid::from_fn(f, h, w, c, GridRole::Target, |fi, y, x, ch| {
                outputs[b * f + fi][(y * w2 + x, ch)]
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereo::grid::stitch;
    use rand::Rng;

    fn random_grid(
        f: usize,
        h: usize,
        w: usize,
        c: usize,
        role: GridRole,
        rng: &mut ChaCha8Rng,
    ) -> FeatureGrid {
        FeatureGrid::from_fn(f, h, w, c, role, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_pair(f: usize, h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> StitchedPair {
        let t = random_grid(f, h, w, c, GridRole::Target, rng);
        let r = random_grid(f, h, w, c, GridRole::Reference, rng);
        let pt = random_grid(f, h, w, c, GridRole::PointmapTarget, rng);
        let pr = random_grid(f, h, w, c, GridRole::PointmapReference, rng);
        stitch(&t, Some(&r), Some(&pt), Some(&pr)).unwrap()
    }

    /// Scalar loops over one sequence, no matrix library.
    fn naive(grid: &FeatureGrid, fi: usize, w: &AttentionWeights) -> Vec<Vec<f64>> {
        let (h, w2, c) = (grid.h, grid.w, grid.c);
        let l = h * w2;
        let tok =
            |i: usize| -> Vec<f64> { (0..c).map(|ch| grid.at(fi, i / w2, i % w2, ch)).collect() };
        let proj = |x: &[f64], m: &DMatrix<f64>| -> Vec<f64> {
            (0..c)
                .map(|j| (0..c).map(|i| x[i] * m[(i, j)]).sum())
                .collect()
        };
        let qs: Vec<_> = (0..l).map(|i| proj(&tok(i), &w.wq)).collect();
        let ks: Vec<_> = (0..l).map(|i| proj(&tok(i), &w.wk)).collect();
        let vs: Vec<_> = (0..l).map(|i| proj(&tok(i), &w.wv)).collect();
        (0..l)
            .map(|i| {
                let logits: Vec<f64> = (0..l)
                    .map(|j| (0..c).map(|k| qs[i][k] * ks[j][k]).sum::<f64>() / (c as f64).sqrt())
                    .collect();
                let m = logits.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                (0..c)
                    .map(|k| (0..l).map(|j| e[j] / z * vs[j][k]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (f, h, w, c) = (2, 2, 2, 4);
        let pairs = vec![
            random_pair(f, h, w, c, &mut rng),
            random_pair(f, h, w, c, &mut rng),
        ];
        let wts = AttentionWeights::random(c, 2);
        let out = ssm_attention(&pairs, &wts).unwrap();
        for (b, p) in pairs.iter().enumerate() {
            for fi in 0..f {
                let oracle = naive(&p.ssm_input, fi, &wts);
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..c {
                            let d = (out[b].at(fi, y, x, ch) - oracle[y * 2 * w + x][ch]).abs();
                            assert!(d < 1e-6);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn uniform_attention_averages_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pair(1, 2, 3, 2, &mut rng);
        let mut wts = AttentionWeights::identity(2);
        wts.wq = DMatrix::zeros(2, 2);
        let out = ssm_attention(std::slice::from_ref(&p), &wts).unwrap();
        let seq = sequence(&p.ssm_input, 0);
        for ch in 0..2 {
            let mean = seq.column(ch).mean();
            for y in 0..2 {
                for x in 0..3 {
                    assert!((out[0].at(0, y, x, ch) - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pairs_are_isolated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (f, h, w, c) = (2, 3, 3, 4);
        let a = random_pair(f, h, w, c, &mut rng);
        let b = random_pair(f, h, w, c, &mut rng);
        let wts = AttentionWeights::random(c, 5);
        let base = ssm_attention(&[a.clone(), b.clone()], &wts).unwrap();
        let mut b2 = b.clone();
        for x in w..2 * w {
            let i = b2.ssm_input.index(0, 1, x, 2);
            b2.ssm_input.data[i] += 0.75;
        }
        let moved = ssm_attention(&[a, b2], &wts).unwrap();
        assert_eq!(base[0], moved[0]);
        assert_ne!(base[1], moved[1]);
    }
}
