//! Order-independent reductions and Monte-Carlo summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Pairwise summation. The result depends only on the slice contents and order,
/// never on thread scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&dev) / (n - 1) as f64
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    /// Number of standard errors separating the estimate from `reference`.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.value - reference).abs();
        if self.se > 0.0 {
            d / self.se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, reference: f64, k: f64) -> bool {
        (self.value - reference).abs() <= k * self.se
    }
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    Estimate {
        value: mean(xs),
        se: if n > 1 {
            (variance(xs) / n as f64).sqrt()
        } else {
            0.0
        },
    }
}

/// Sample variance with a large-sample standard error.
pub fn variance_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = variance(xs);
    let quart: Vec<f64> = sq.iter().map(|s| (s - var) * (s - var)).collect();
    Estimate {
        value: var,
        se: if n > 1 {
            (mean(&quart) / n as f64).sqrt()
        } else {
            0.0
        },
    }
}

/// Per-replicate observation columns for smooth functions of means.
///
/// `linearized` gives the delta-method estimate of `g(mean_1, ..., mean_k)`
/// given its gradient at the sample means.
#[derive(Debug, Clone, Default)]
pub struct Columns {
    cols: Vec<Vec<f64>>,
}

impl Columns {
    pub fn from_rows<const K: usize>(rows: &[[f64; K]]) -> Self {
        let mut cols = vec![Vec::with_capacity(rows.len()); K];
        for r in rows {
            for (c, v) in cols.iter_mut().zip(r.iter()) {
                c.push(*v);
            }
        }
        Self { cols }
    }

    pub fn len(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn col(&self, k: usize) -> &[f64] {
        &self.cols[k]
    }

    pub fn means(&self) -> Vec<f64> {
        self.cols.iter().map(|c| mean(c)).collect()
    }

    pub fn mean(&self, k: usize) -> Estimate {
        mean_se(&self.cols[k])
    }

    /// Standard error of `sum_k grad[k] * mean_k`.
    pub fn linear_se(&self, grad: &[f64]) -> f64 {
        let n = self.len();
        let comb: Vec<f64> = (0..n)
            .map(|i| {
                grad.iter()
                    .zip(self.cols.iter())
                    .map(|(g, c)| g * c[i])
                    .sum::<f64>()
            })
            .collect();
        mean_se(&comb).se
    }

    /// Delta-method estimate of `g(means)`, with the gradient taken by
    /// central differences scaled to each column's standard error.
    pub fn delta<G: Fn(&[f64]) -> f64>(&self, g: G) -> Estimate {
        let m = self.means();
        let value = g(&m);
        if self.len() < 2 {
            return Estimate { value, se: 0.0 };
        }
        let mut grad = vec![0.0; m.len()];
        let mut probe = m.clone();
        for j in 0..m.len() {
            let se = self.mean(j).se;
            if se == 0.0 {
                continue;
            }
            let h = 1e-4 * se.max(1e-9 * m[j].abs());
            probe[j] = m[j] + h;
            let up = g(&probe);
            probe[j] = m[j] - h;
            let down = g(&probe);
            probe[j] = m[j];
            grad[j] = (up - down) / (2.0 * h);
        }
        if grad.iter().any(|d| !d.is_finite()) {
            return Estimate {
                value,
                se: f64::INFINITY,
            };
        }
        self.linearized(value, &grad)
    }

    /// Unbiased variance of column `k` expressed through the means of
    /// columns `k` and `k2` (which must hold the squares).
    pub fn variance_from(&self, means: &[f64], k: usize, k2: usize) -> f64 {
        let n = self.len() as f64;
        (means[k2] - means[k] * means[k]) * n / (n - 1.0)
    }

    pub fn linearized(&self, value: f64, grad: &[f64]) -> Estimate {
        Estimate {
            value,
            se: self.linear_se(grad),
        }
    }
}

/// Deterministic parallel map over replicate indices; output is in index order.
pub fn par_replicates<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}
