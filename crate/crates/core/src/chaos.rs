//! Finite chaos expansions and their pathwise evaluation.
//!
//! `I_p(f)` is evaluated in closed form on a counting configuration: grouping
//! the factorial-measure expansion by cell multiset gives
//!
//! ```text
//! I_p(f)(χ) = Σ_Z f(Z) · p!/Π m_c! · Π_c C_{m_c}(n_c; μ_c)
//! C_m(n; μ)  = Σ_j C(m, j) (n)_j (−μ)^{m−j}
//! ```
//!
//! where `Z` runs over multisets with multiplicities `m_c`, `n_c` are the
//! cell counts and `(n)_j` is the falling factorial. [`ChaosFunctional::evaluate_enumerated`]
//! keeps the literal sum over distinct point tuples as a cross-check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::kernels::{binomial, factorial, SymKernel, Tensor};
use crate::malliavin::iterated;
use crate::rng::SeedTree;
use crate::space::{sample_poisson_with, DiscreteSpace, PointConfig};
use crate::stats::{mean_se, par_replicates, Estimate};

/// Anything that maps a configuration to a real number.
pub trait Functional: Sync {
    fn eval(&self, config: &PointConfig) -> f64;
}

impl<F> Functional for F
where
    F: Fn(&PointConfig) -> f64 + Sync,
{
    fn eval(&self, config: &PointConfig) -> f64 {
        self(config)
    }
}

/// Charlier polynomial C_m(n; μ) = Σ_j C(m,j) (n)_j (−μ)^{m−j}.
pub fn charlier(m: usize, n: u32, mu: f64) -> f64 {
    let mut falling = 1.0;
    let mut acc = 0.0;
    for j in 0..=m {
        if j > 0 {
            let k = f64::from(n) - (j - 1) as f64;
            if k <= 0.0 {
                break;
            }
            falling *= k;
        }
        acc += binomial(m, j) as f64 * falling * (-mu).powi((m - j) as i32);
    }
    acc
}

/// c₀ + Σ_p I_p(f_p) on a fixed space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosFunctional {
    space: DiscreteSpace,
    constant: f64,
    kernels: BTreeMap<usize, SymKernel>,
}

impl ChaosFunctional {
    pub fn constant(space: &DiscreteSpace, c: f64) -> Self {
        Self {
            space: space.clone(),
            constant: c,
            kernels: BTreeMap::new(),
        }
    }

    /// The single multiple integral I_p(f).
    pub fn integral(space: &DiscreteSpace, kernel: SymKernel) -> Result<Self> {
        Self::constant(space, 0.0).with_kernel(kernel)
    }

    /// Add `I_p(kernel)` to the expansion.
    pub fn with_kernel(mut self, kernel: SymKernel) -> Result<Self> {
        if kernel.n_cells() != self.space.n_cells() {
            return Err(Error::SpaceMismatch {
                expected: self.space.n_cells(),
                found: kernel.n_cells(),
            });
        }
        let p = kernel.order();
        if p == 0 {
            self.constant += kernel.values()[0];
            return Ok(self);
        }
        let merged = match self.kernels.remove(&p) {
            Some(old) => old.combine(1.0, &kernel, 1.0)?,
            None => kernel,
        };
        self.kernels.insert(p, merged);
        Ok(self)
    }

    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn kernel(&self, p: usize) -> Option<&SymKernel> {
        self.kernels.get(&p)
    }

    pub fn kernels(&self) -> impl Iterator<Item = (usize, &SymKernel)> {
        self.kernels.iter().map(|(&p, k)| (p, k))
    }

    pub fn max_order(&self) -> usize {
        self.kernels.keys().next_back().copied().unwrap_or(0)
    }

    /// Order q if the functional is a single integral I_q(f) with q ≥ 1.
    pub fn single_order(&self) -> Option<usize> {
        if self.constant != 0.0 || self.kernels.len() != 1 {
            return None;
        }
        self.kernels.keys().next().copied()
    }

    fn check(&self, other: &ChaosFunctional) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                expected: self.space.n_cells(),
                found: other.space.n_cells(),
            });
        }
        Ok(())
    }

    /// a·self + b·other.
    pub fn combine(&self, a: f64, other: &ChaosFunctional, b: f64) -> Result<ChaosFunctional> {
        self.check(other)?;
        let mut out = ChaosFunctional::constant(&self.space, a * self.constant + b * other.constant);
        for (_, k) in self.kernels() {
            out = out.with_kernel(k.scaled(a))?;
        }
        for (_, k) in other.kernels() {
            out = out.with_kernel(k.scaled(b))?;
        }
        Ok(out)
    }

    pub fn scaled(&self, a: f64) -> ChaosFunctional {
        ChaosFunctional {
            space: self.space.clone(),
            constant: a * self.constant,
            kernels: self.kernels.iter().map(|(&p, k)| (p, k.scaled(a))).collect(),
        }
    }

    /// Kernels transformed order by order; the constant is replaced.
    pub fn map_kernels<F: Fn(usize, &SymKernel) -> SymKernel>(&self, constant: f64, f: F) -> ChaosFunctional {
        ChaosFunctional {
            space: self.space.clone(),
            constant,
            kernels: self.kernels.iter().map(|(&p, k)| (p, f(p, k))).collect(),
        }
    }

    /// Var F = Σ_p p!‖f_p‖².
    pub fn variance(&self) -> f64 {
        self.kernels()
            .map(|(p, k)| factorial(p) * k.norm_sq(&self.space).expect("kernel on own space"))
            .sum()
    }

    /// Pathwise value at `config`.
    pub fn evaluate(&self, config: &PointConfig) -> Result<f64> {
        self.space.check_config(config)?;
        Ok(self.evaluate_unchecked(config))
    }

    fn evaluate_unchecked(&self, config: &PointConfig) -> f64 {
        let m = self.max_order();
        if m == 0 {
            return self.constant;
        }
        let n_cells = self.space.n_cells();
        // table[c * (m + 1) + k] = C_k(n_c; μ_c)
        let mut table = vec![0.0; n_cells * (m + 1)];
        for c in 0..n_cells {
            for k in 0..=m {
                table[c * (m + 1) + k] = charlier(k, config.count(c), self.space.mass(c));
            }
        }
        let mut total = self.constant;
        for (_, kernel) in self.kernels() {
            let layout = kernel.layout();
            let mut acc = 0.0;
            for (r, &v) in kernel.values().iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let prod: f64 = layout
                    .runs(r)
                    .iter()
                    .map(|&(c, mult)| table[c * (m + 1) + mult])
                    .product();
                acc += v * layout.arrangements(r) * prod;
            }
            total += acc;
        }
        total
    }

    /// The literal factorial-measure sum over ordered tuples of distinct
    /// points. Points in the same cell are distinguishable copies. Fails if
    /// a single order needs more than `max_tuples` tuples.
    pub fn evaluate_enumerated(&self, config: &PointConfig, max_tuples: u64) -> Result<f64> {
        self.space.check_config(config)?;
        let points: Vec<usize> = config
            .counts()
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n as usize))
            .collect();
        let n_points = points.len();
        let mut total = self.constant;
        for (p, kernel) in self.kernels() {
            let tuples = (0..p).fold(1u64, |acc, i| acc.saturating_mul(n_points.saturating_sub(i) as u64));
            if tuples > max_tuples {
                return Err(Error::InstanceTooLarge(format!(
                    "{tuples} distinct {p}-tuples over {n_points} points exceed the cap {max_tuples}"
                )));
            }
            // contracted[j] = ∫ f dμ^{p−j}, a function of j arguments
            let mut contracted: Vec<Tensor> = vec![kernel.to_tensor()?];
            for _ in 0..p {
                let prev = contracted.last().expect("nonempty");
                let j = prev.order() - 1;
                let next = Tensor::from_fn(self.space.n_cells(), j, |idx| {
                    let mut full = idx.to_vec();
                    full.push(0);
                    (0..self.space.n_cells())
                        .map(|c| {
                            full[j] = c;
                            prev.get(&full).expect("in range") * self.space.mass(c)
                        })
                        .sum()
                })?;
                contracted.push(next);
            }
            contracted.reverse(); // contracted[j] now has order j
            let mut acc = 0.0;
            for (j, h) in contracted.iter().enumerate() {
                let sign = if (p - j) % 2 == 0 { 1.0 } else { -1.0 };
                let coeff = sign * binomial(p, j) as f64;
                let mut used = vec![false; n_points];
                let mut idx = Vec::with_capacity(j);
                let mut s = 0.0;
                sum_distinct(&points, j, &mut used, &mut idx, &mut |tuple| {
                    s += h.get(tuple).expect("in range");
                });
                acc += coeff * s;
            }
            total += acc;
        }
        Ok(total)
    }

    /// Load `{"constant": c, "kernels": {"1": {...}, "2": {...}}}`.
    pub fn from_json_value(value: &Value, space: &DiscreteSpace) -> Result<Self> {
        let doc: FunctionalDoc = serde_json::from_value(value.clone())?;
        let mut f = ChaosFunctional::constant(space, doc.constant);
        for (key, kv) in &doc.kernels {
            let p: usize = key
                .parse()
                .map_err(|_| Error::InvalidKernel(format!("kernel key `{key}` is not an order")))?;
            let k = SymKernel::from_json_value(kv, space.n_cells())?;
            if k.order() != p {
                return Err(Error::OrderMismatch {
                    left: p,
                    right: k.order(),
                });
            }
            f = f.with_kernel(k)?;
        }
        Ok(f)
    }

    pub fn from_json(s: &str, space: &DiscreteSpace) -> Result<Self> {
        let v: Value = serde_json::from_str(s)?;
        Self::from_json_value(&v, space)
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(FunctionalDoc {
            constant: self.constant,
            kernels: self
                .kernels
                .iter()
                .map(|(p, k)| (p.to_string(), k.to_json_value()))
                .collect(),
        })
        .expect("functional serializes")
    }
}

impl Functional for ChaosFunctional {
    fn eval(&self, config: &PointConfig) -> f64 {
        assert_eq!(
            config.n_cells(),
            self.space.n_cells(),
            "configuration is not on the functional's space"
        );
        self.evaluate_unchecked(config)
    }
}

#[derive(Serialize, Deserialize)]
struct FunctionalDoc {
    #[serde(default)]
    constant: f64,
    #[serde(default)]
    kernels: BTreeMap<String, Value>,
}

fn sum_distinct<F: FnMut(&[usize])>(
    points: &[usize],
    len: usize,
    used: &mut [bool],
    idx: &mut Vec<usize>,
    visit: &mut F,
) {
    if idx.len() == len {
        visit(idx);
        return;
    }
    for i in 0..points.len() {
        if !used[i] {
            used[i] = true;
            idx.push(points[i]);
            sum_distinct(points, len, used, idx, visit);
            idx.pop();
            used[i] = false;
        }
    }
}

/// Monte-Carlo estimate of E[F^k] and E[(F − EF)^k].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub order: u32,
    pub raw: Estimate,
    pub central: Estimate,
}

/// Sample F at `n` independent configurations.
pub fn sample_values<F: Functional + ?Sized>(f: &F, space: &DiscreteSpace, n: usize, tree: SeedTree) -> Vec<f64> {
    par_replicates(n, |i| f.eval(&sample_poisson_with(space, &mut tree.rng(i))))
}

pub fn estimate_moments<F: Functional + ?Sized>(
    f: &F,
    space: &DiscreteSpace,
    orders: &[u32],
    n: usize,
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    if n < 2 {
        return Err(Error::InvalidParameter("at least two replicates are needed".into()));
    }
    let values = sample_values(f, space, n, SeedTree::new(seed).child("moments"));
    let m = crate::stats::mean(&values);
    Ok(orders
        .iter()
        .map(|&k| {
            let raw: Vec<f64> = values.iter().map(|v| v.powi(k as i32)).collect();
            let central: Vec<f64> = values.iter().map(|v| (v - m).powi(k as i32)).collect();
            MomentEstimate {
                order: k,
                raw: mean_se(&raw),
                central: mean_se(&central),
            }
        })
        .collect())
}

const ROUNDOFF: f64 = 1e-12;

/// Entrywise estimate of a chaos kernel with standard errors.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub mean: SymKernel,
    pub se: SymKernel,
}

impl KernelEstimate {
    /// Largest |estimate − reference| / SE over entries. The SE is floored
    /// at a relative 1e-12 so entries that are deterministic up to roundoff
    /// do not register as outliers.
    pub fn max_z_score(&self, reference: &SymKernel) -> Result<f64> {
        let _ = self.mean.max_abs_diff(reference)?;
        Ok(self
            .mean
            .values()
            .iter()
            .zip(self.se.values())
            .zip(reference.values())
            .map(|((m, s), r)| {
                Estimate {
                    value: *m,
                    se: s.max(ROUNDOFF * r.abs().max(1.0)),
                }
                .z_score(*r)
            })
            .fold(0.0, f64::max))
    }
}

/// Estimate f_p(z) = E[D^(p)_z F] / p! by Monte Carlo.
pub fn extract_kernel<F: Functional + ?Sized>(
    f: &F,
    space: &DiscreteSpace,
    p: usize,
    n: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    if p == 0 {
        return Err(Error::InvalidParameter("kernel order must be at least 1".into()));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("at least two replicates are needed".into()));
    }
    let mut mean = SymKernel::zeros(space.n_cells(), p)?;
    let mut se = mean.clone();
    let layout = mean.layout().clone();
    let tree = SeedTree::new(seed).child("extract");
    let p_fact = factorial(p);
    let rows: Vec<Vec<f64>> = par_replicates(n, |i| {
        let config = sample_poisson_with(space, &mut tree.rng(i));
        (0..layout.len())
            .map(|r| iterated(f, &config, layout.multiset(r)) / p_fact)
            .collect()
    });
    let mut column = vec![0.0; n];
    for r in 0..layout.len() {
        for (slot, row) in column.iter_mut().zip(&rows) {
            *slot = row[r];
        }
        let e = mean_se(&column);
        mean.values_mut()[r] = e.value;
        se.values_mut()[r] = e.se;
    }
    Ok(KernelEstimate { mean, se })
}

/// Exact top chaos kernel of I_p(f)·I_q(g) next to f ⊗̃ g.
#[derive(Debug, Clone)]
pub struct ProductTopKernel {
    pub exact: SymKernel,
    pub sym_product: SymKernel,
    pub max_abs_diff: f64,
}

/// Largest instance accepted by [`product_top_kernel_check`].
pub const PRODUCT_CHECK_MAX_CELLS: usize = 6;
pub const PRODUCT_CHECK_MAX_ORDER: usize = 4;

pub fn product_top_kernel_check(space: &DiscreteSpace, f: &SymKernel, g: &SymKernel) -> Result<ProductTopKernel> {
    let order = f.order() + g.order();
    if space.n_cells() > PRODUCT_CHECK_MAX_CELLS || order > PRODUCT_CHECK_MAX_ORDER {
        return Err(Error::InstanceTooLarge(format!(
            "product check supports ≤ {PRODUCT_CHECK_MAX_CELLS} cells and p+q ≤ {PRODUCT_CHECK_MAX_ORDER}"
        )));
    }
    let ff = ChaosFunctional::integral(space, f.clone())?;
    let gg = ChaosFunctional::integral(space, g.clone())?;
    let poly = crate::oracle::to_polynomial(&ff)?.mul(&crate::oracle::to_polynomial(&gg)?)?;
    let exact = crate::oracle::exact_kernel(&poly, space, order)?;
    let sym_product = f.sym_tensor_product(g)?;
    let max_abs_diff = exact.max_abs_diff(&sym_product)?;
    Ok(ProductTopKernel {
        exact,
        sym_product,
        max_abs_diff,
    })
}
