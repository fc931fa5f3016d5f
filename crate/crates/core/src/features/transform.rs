use std::ops::Range;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureFrame, Result};

/// Per (ticker, feature) z-scoring fit on a training range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// `mean[asset][feature]`
    pub mean: Vec<Vec<f64>>,
    /// Sample std; 0 marks a zero-variance column that maps to 0.
    pub std: Vec<Vec<f64>>,
}

impl Standardizer {
    pub fn fit(frame: &FeatureFrame, range: Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > frame.n_days {
            return Err(FeatureError::EmptyRange);
        }
        let f = frame.dim();
        let mut mean = vec![vec![0.0; f]; frame.n_assets];
        let mut std = vec![vec![0.0; f]; frame.n_assets];
        for a in 0..frame.n_assets {
            for k in 0..f {
                let vals: Vec<f64> = range
                    .clone()
                    .map(|t| frame.get(t, a, k))
                    .filter(|v| !v.is_nan())
                    .collect();
                if vals.is_empty() {
                    return Err(FeatureError::InsufficientHistory {
                        needed: frame.lags[k] + 1,
                        have: range.end,
                    });
                }
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let s = if vals.len() < 2 {
                    0.0
                } else {
                    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
                };
                mean[a][k] = m;
                if s <= 1e-12 * (1.0 + m.abs()) {
                    warn!("feature {} has zero training variance for asset {a}; standardized to 0", frame.names[k]);
                    std[a][k] = 0.0;
                } else {
                    std[a][k] = s;
                }
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply_one(&self, asset: usize, feature: usize, x: f64) -> f64 {
        let s = self.std[asset][feature];
        if s == 0.0 {
            0.0
        } else {
            (x - self.mean[asset][feature]) / s
        }
    }

    /// Same layout as `frame`; undefined entries stay NaN.
    pub fn apply(&self, frame: &FeatureFrame) -> FeatureFrame {
        let mut out = frame.clone();
        let f = frame.dim();
        for t in 0..frame.n_days {
            for a in 0..frame.n_assets {
                for k in 0..f {
                    let x = frame.get(t, a, k);
                    if !x.is_nan() {
                        out.data[(t * frame.n_assets + a) * f + k] = self.apply_one(a, k, x);
                    }
                }
            }
        }
        out
    }
}

/// Pooled principal components: projection = (x − mean) · components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// Row-major `dim × k`; column j is the j-th eigenvector.
    pub components: Vec<f64>,
    /// All eigenvalues of the pooled covariance, descending.
    pub eigenvalues: Vec<f64>,
    pub dim: usize,
    pub k: usize,
}

impl PcaTransform {
    /// `rows` is a flat row-major matrix with `names.len()` columns.
    pub fn fit(rows: &[f64], names: &[String], k: usize) -> Result<Self> {
        let dim = names.len();
        if dim == 0 || k == 0 || k > dim {
            return Err(FeatureError::InvalidArgument(format!("cannot keep {k} of {dim} components")));
        }
        let n = rows.len() / dim;
        if n < dim.max(2) || rows.len() % dim != 0 {
            return Err(FeatureError::InsufficientHistory { needed: dim.max(2), have: n });
        }
        let mut mean = vec![0.0; dim];
        for r in rows.chunks(dim) {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for r in rows.chunks(dim) {
            for i in 0..dim {
                let di = r[i] - mean[i];
                for j in i..dim {
                    cov[(i, j)] += di * (r[j] - mean[j]);
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[(i, j)] / (n - 1) as f64;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(cov.clone());
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
        let eigenvalues: Vec<f64> = order.iter().map(|i| eig.eigenvalues[*i].max(0.0)).collect();
        let scale = eigenvalues[0].max(f64::MIN_POSITIVE);
        let rank = eigenvalues.iter().filter(|l| **l > 1e-10 * scale).count();
        if eigenvalues[0] <= 0.0 || rank < k {
            let mut degenerate: Vec<String> = (0..dim)
                .filter(|i| cov[(*i, *i)] <= 1e-12)
                .map(|i| names[i].clone())
                .collect();
            if degenerate.is_empty() {
                // collinear rather than constant: report features loading on the null space
                for &j in &order[rank..] {
                    for i in 0..dim {
                        if eig.eigenvectors[(i, j)].abs() > 0.1 && !degenerate.contains(&names[i]) {
                            degenerate.push(names[i].clone());
                        }
                    }
                }
            }
            return Err(FeatureError::RankDeficient { k, rank, degenerate });
        }
        let mut components = vec![0.0; dim * k];
        for (c, &j) in order.iter().take(k).enumerate() {
            let col = eig.eigenvectors.column(j);
            // deterministic sign: largest-magnitude loading positive
            let pivot = (0..dim).max_by(|a, b| col[*a].abs().total_cmp(&col[*b].abs())).unwrap();
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..dim {
                components[i * k + c] = sign * col[i];
            }
        }
        Ok(PcaTransform {
            mean,
            components,
            eigenvalues,
            dim,
            k,
        })
    }

    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.dim {
            let d = x[i] - self.mean[i];
            for c in 0..self.k {
                out[c] += d * self.components[i * self.k + c];
            }
        }
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues[..self.k].iter().sum::<f64>() / total
    }

    /// Maps a projection back to feature space.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.mean[i] + (0..self.k).map(|c| z[c] * self.components[i * self.k + c]).sum::<f64>())
            .collect()
    }
}
