use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Per-axis mean and (population) standard deviation of flat `n × d` samples.
pub fn moments(samples: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (samples.len() / dim).max(1) as f64;
    let mut mean = vec![0.0; dim];
    for x in samples.chunks_exact(dim) {
        for i in 0..dim {
            mean[i] += x[i] / n;
        }
    }
    let mut var = vec![0.0; dim];
    for x in samples.chunks_exact(dim) {
        for i in 0..dim {
            var[i] += (x[i] - mean[i]).powi(2) / n;
        }
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

/// Exact 2-Wasserstein distance between two equal-size 1-D samples.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(
            "samples must be non-empty and of equal size",
        ));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// Sliced 2-Wasserstein distance: root mean of the squared 1-D distances of
/// projections onto `directions` evenly spaced angles. Exact in 1-D.
pub fn sliced_wasserstein2(a: &[f64], b: &[f64], dim: usize, directions: usize) -> Result<f64> {
    match dim {
        1 => wasserstein2_1d(a, b),
        2 => {
            if directions == 0 {
                return Err(Error::invalid("need at least one direction"));
            }
            let mut total = 0.0;
            for k in 0..directions {
                let th = PI * k as f64 / directions as f64;
                let (c, s) = (th.cos(), th.sin());
                let pa: Vec<f64> = a.chunks_exact(2).map(|p| c * p[0] + s * p[1]).collect();
                let pb: Vec<f64> = b.chunks_exact(2).map(|p| c * p[0] + s * p[1]).collect();
                total += wasserstein2_1d(&pa, &pb)?.powi(2);
            }
            Ok((total / directions as f64).sqrt())
        }
        _ => Err(Error::invalid(format!(
            "sliced distance supports 1 or 2 dimensions, got {dim}"
        ))),
    }
}
