//! Exact expectations on finite spaces.
//!
//! A chaos functional on a finite space is a polynomial in the cell counts
//! `N_1..N_m`, which are independent Poisson variables. Monomials factor over
//! cells and `E[N^k] = T_k(μ)` (Touchard polynomial), so every polynomial has a
//! closed-form expectation.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::chaos::ChaosFunctional;
use crate::error::{Error, Result};
use crate::kernels::{binomial, factorial, SymKernel};
use crate::space::{DiscreteSpace, PointConfig};

/// Largest number of cells the oracle handles.
pub const MAX_CELLS: usize = 16;
/// Largest per-cell exponent with an exact Touchard expansion.
pub const MAX_DEGREE: usize = 40;
/// Largest number of monomials in a single polynomial.
pub const MAX_TERMS: usize = 1_000_000;

type Exponents = [u8; MAX_CELLS];

/// Stirling numbers of the second kind S(n, k) for n ≤ MAX_DEGREE.
fn stirling2() -> &'static Vec<Vec<u128>> {
    static TABLE: OnceLock<Vec<Vec<u128>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut s = vec![vec![0u128; MAX_DEGREE + 1]; MAX_DEGREE + 1];
        s[0][0] = 1;
        for n in 1..=MAX_DEGREE {
            for k in 1..=n {
                s[n][k] = k as u128 * s[n - 1][k] + s[n - 1][k - 1];
            }
        }
        s
    })
}

/// Signed Stirling numbers of the first kind s(n, k): (x)_n = Σ_k s(n,k) x^k.
fn stirling1(n: usize) -> Vec<i128> {
    let mut row = vec![1i128];
    for i in 0..n {
        let mut next = vec![0i128; row.len() + 1];
        for (k, &c) in row.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= i as i128 * c;
        }
        row = next;
    }
    row
}

/// Touchard polynomial T_k(μ) = E[N^k] for N ~ Poisson(μ).
pub fn touchard(k: usize, mu: f64) -> f64 {
    assert!(k <= MAX_DEGREE, "Touchard degree {k} exceeds {MAX_DEGREE}");
    let row = &stirling2()[k];
    // Horner in μ over the coefficients S(k, j)
    let mut acc = 0.0;
    for j in (0..=k).rev() {
        acc = acc * mu + row[j] as f64;
    }
    acc
}

/// Sparse polynomial in the cell counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPolynomial {
    n_cells: usize,
    terms: BTreeMap<Exponents, f64>,
}

impl CountPolynomial {
    pub fn zero(n_cells: usize) -> Result<Self> {
        if n_cells > MAX_CELLS {
            return Err(Error::InstanceTooLarge(format!(
                "oracle supports at most {MAX_CELLS} cells, got {n_cells}"
            )));
        }
        Ok(Self {
            n_cells,
            terms: BTreeMap::new(),
        })
    }

    pub fn constant(n_cells: usize, c: f64) -> Result<Self> {
        let mut p = Self::zero(n_cells)?;
        p.add_term([0; MAX_CELLS], c);
        Ok(p)
    }

    /// The polynomial N_cell.
    pub fn count(n_cells: usize, cell: usize) -> Result<Self> {
        let mut p = Self::zero(n_cells)?;
        if cell >= n_cells {
            return Err(Error::CellOutOfRange { cell, n_cells });
        }
        let mut e = [0; MAX_CELLS];
        e[cell] = 1;
        p.add_term(e, 1.0);
        Ok(p)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// (exponents, coefficient) pairs in lexicographic exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        self.terms.iter().map(move |(e, &c)| (&e[..self.n_cells], c))
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .max()
            .unwrap_or(0)
    }

    fn add_term(&mut self, e: Exponents, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.remove(&e);
        }
    }

    fn check_cap(&self) -> Result<()> {
        if self.terms.len() > MAX_TERMS {
            Err(Error::InstanceTooLarge(format!(
                "polynomial exceeds {MAX_TERMS} terms"
            )))
        } else {
            Ok(())
        }
    }

    fn check_same(&self, other: &CountPolynomial) -> Result<()> {
        if self.n_cells == other.n_cells {
            Ok(())
        } else {
            Err(Error::SpaceMismatch {
                expected: self.n_cells,
                found: other.n_cells,
            })
        }
    }

    /// a·self + b·other.
    pub fn combine(&self, a: f64, other: &CountPolynomial, b: f64) -> Result<CountPolynomial> {
        self.check_same(other)?;
        let mut out = Self::zero(self.n_cells)?;
        for (e, &c) in &self.terms {
            out.add_term(*e, a * c);
        }
        for (e, &c) in &other.terms {
            out.add_term(*e, b * c);
        }
        out.check_cap()?;
        Ok(out)
    }

    pub fn add(&self, other: &CountPolynomial) -> Result<CountPolynomial> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &CountPolynomial) -> Result<CountPolynomial> {
        self.combine(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> CountPolynomial {
        let mut out = self.clone();
        if a == 0.0 {
            out.terms.clear();
        } else {
            out.terms.values_mut().for_each(|c| *c *= a);
        }
        out
    }

    pub fn add_constant(&self, c: f64) -> CountPolynomial {
        let mut out = self.clone();
        out.add_term([0; MAX_CELLS], c);
        out
    }

    pub fn mul(&self, other: &CountPolynomial) -> Result<CountPolynomial> {
        self.check_same(other)?;
        let mut out = Self::zero(self.n_cells)?;
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let mut e = [0u8; MAX_CELLS];
                for i in 0..self.n_cells {
                    e[i] = ea[i].checked_add(eb[i]).ok_or_else(|| {
                        Error::InstanceTooLarge("per-cell exponent overflow".into())
                    })?;
                }
                out.add_term(e, ca * cb);
            }
            out.check_cap()?;
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Result<CountPolynomial> {
        let mut out = Self::constant(self.n_cells, 1.0)?;
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// P(N) ↦ N_cell · P(N).
    pub fn mul_count(&self, cell: usize) -> Result<CountPolynomial> {
        self.mul(&Self::count(self.n_cells, cell)?)
    }

    /// P(N) ↦ P(N + s).
    pub fn shift(&self, s: &[i64]) -> Result<CountPolynomial> {
        if s.len() != self.n_cells {
            return Err(Error::SpaceMismatch {
                expected: self.n_cells,
                found: s.len(),
            });
        }
        let mut out = Self::zero(self.n_cells)?;
        for (e, &c) in &self.terms {
            // expand Π_i (N_i + s_i)^{e_i} one cell at a time
            let mut partial: Vec<(Exponents, f64)> = vec![([0; MAX_CELLS], c)];
            for i in 0..self.n_cells {
                let a = e[i] as usize;
                if a == 0 {
                    continue;
                }
                let si = s[i] as f64;
                let mut next = Vec::with_capacity(partial.len() * (a + 1));
                for (pe, pc) in &partial {
                    for j in 0..=a {
                        let w = if si == 0.0 {
                            if j == a {
                                1.0
                            } else {
                                continue;
                            }
                        } else {
                            binomial(a, j) as f64 * si.powi((a - j) as i32)
                        };
                        let mut ne = *pe;
                        ne[i] = j as u8;
                        next.push((ne, pc * w));
                    }
                }
                partial = next;
            }
            for (pe, pc) in partial {
                out.add_term(pe, pc);
            }
            out.check_cap()?;
        }
        Ok(out)
    }

    fn unit_shift(&self, cell: usize, sign: i64) -> Result<CountPolynomial> {
        let mut s = vec![0i64; self.n_cells];
        s[cell] = sign;
        self.shift(&s)
    }

    /// Add-one cost D⁺_cell as a polynomial map.
    pub fn add_one_cost(&self, cell: usize) -> Result<CountPolynomial> {
        self.unit_shift(cell, 1)?.sub(self)
    }

    /// P(N) − P(N − e_cell); agrees with D⁻_cell wherever N_cell ≥ 1.
    pub fn backward_difference(&self, cell: usize) -> Result<CountPolynomial> {
        self.sub(&self.unit_shift(cell, -1)?)
    }

    pub fn eval_counts(&self, counts: &[u32]) -> f64 {
        self.terms
            .iter()
            .map(|(e, &c)| {
                c * (0..self.n_cells)
                    .map(|i| f64::from(counts[i]).powi(e[i] as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn eval(&self, config: &PointConfig) -> f64 {
        self.eval_counts(config.counts())
    }

    /// E[P(N)] under independent N_i ~ Poisson(μ_i).
    pub fn expectation(&self, space: &DiscreteSpace) -> Result<f64> {
        if space.n_cells() != self.n_cells {
            return Err(Error::SpaceMismatch {
                expected: self.n_cells,
                found: space.n_cells(),
            });
        }
        let max_exp = self
            .terms
            .keys()
            .flat_map(|e| e.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        if max_exp > MAX_DEGREE {
            return Err(Error::InstanceTooLarge(format!(
                "per-cell degree {max_exp} exceeds {MAX_DEGREE}"
            )));
        }
        let moments: Vec<Vec<f64>> = space
            .masses()
            .iter()
            .map(|&m| (0..=max_exp).map(|k| touchard(k, m)).collect())
            .collect();
        Ok(self
            .terms
            .iter()
            .map(|(e, &c)| c * (0..self.n_cells).map(|i| moments[i][e[i] as usize]).product::<f64>())
            .sum())
    }
}

/// Power-basis coefficients of the Charlier polynomial C_m(n; μ).
fn charlier_coefficients(m: usize, mu: f64) -> Vec<f64> {
    let mut out = vec![0.0; m + 1];
    for j in 0..=m {
        let w = binomial(m, j) as f64 * (-mu).powi((m - j) as i32);
        for (k, &s) in stirling1(j).iter().enumerate() {
            out[k] += w * s as f64;
        }
    }
    out
}

/// Symbolic expansion of a chaos functional in the cell counts.
pub fn to_polynomial(f: &ChaosFunctional) -> Result<CountPolynomial> {
    let space = f.space();
    let n = space.n_cells();
    let mut out = CountPolynomial::constant(n, f.constant_term())?;
    let m = f.max_order();
    let coeffs: Vec<Vec<Vec<f64>>> = space
        .masses()
        .iter()
        .map(|&mu| (0..=m).map(|k| charlier_coefficients(k, mu)).collect())
        .collect();
    for (_, kernel) in f.kernels() {
        let layout = kernel.layout();
        for (r, &v) in kernel.values().iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let mut partial: Vec<(Exponents, f64)> = vec![([0; MAX_CELLS], v * layout.arrangements(r))];
            for &(c, mult) in layout.runs(r) {
                let cf = &coeffs[c][mult];
                let mut next = Vec::with_capacity(partial.len() * cf.len());
                for (pe, pc) in &partial {
                    for (k, &w) in cf.iter().enumerate() {
                        if w != 0.0 {
                            let mut ne = *pe;
                            ne[c] = k as u8;
                            next.push((ne, pc * w));
                        }
                    }
                }
                partial = next;
            }
            for (pe, pc) in partial {
                out.add_term(pe, pc);
            }
            out.check_cap()?;
        }
    }
    Ok(out)
}

/// E[F^k].
pub fn exact_moment(f: &ChaosFunctional, k: u32) -> Result<f64> {
    to_polynomial(f)?.pow(k)?.expectation(f.space())
}

/// E[F·G].
pub fn exact_product_expectation(f: &ChaosFunctional, g: &ChaosFunctional) -> Result<f64> {
    if f.space() != g.space() {
        return Err(Error::SpaceMismatch {
            expected: f.space().n_cells(),
            found: g.space().n_cells(),
        });
    }
    to_polynomial(f)?.mul(&to_polynomial(g)?)?.expectation(f.space())
}

/// Exact order-p chaos kernel f_p(Z) = E[D^(p)_Z P] / p!.
pub fn exact_kernel(poly: &CountPolynomial, space: &DiscreteSpace, p: usize) -> Result<SymKernel> {
    if p == 0 {
        return Ok(SymKernel::scalar(space.n_cells(), poly.expectation(space)?));
    }
    let mut out = SymKernel::zeros(space.n_cells(), p)?;
    let layout = out.layout().clone();
    let p_fact = factorial(p);
    // reuse differences along shared prefixes
    let mut cache: BTreeMap<Vec<usize>, CountPolynomial> = BTreeMap::new();
    cache.insert(Vec::new(), poly.clone());
    for r in 0..layout.len() {
        let ms = layout.multiset(r);
        let mut start = ms.len();
        while !cache.contains_key(&ms[..start]) {
            start -= 1;
        }
        for i in start..ms.len() {
            let next = cache[&ms[..i]].add_one_cost(ms[i])?;
            cache.insert(ms[..=i].to_vec(), next);
        }
        out.values_mut()[r] = cache[ms].expectation(space)? / p_fact;
        cache.retain(|k, _| k.len() < ms.len());
    }
    Ok(out)
}

/// All chaos kernels of a polynomial functional up to order `max_order`.
/// Entry `p` of the result is the order-`p` kernel; entry 0 is the mean.
pub fn exact_decomposition(
    poly: &CountPolynomial,
    space: &DiscreteSpace,
    max_order: usize,
) -> Result<Vec<SymKernel>> {
    (0..=max_order).map(|p| exact_kernel(poly, space, p)).collect()
}

/// Var(proj_p P) = p! ‖f_p‖² for p = 0..=max_order (entry 0 is 0).
pub fn projection_variances(poly: &CountPolynomial, space: &DiscreteSpace, max_order: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0];
    for p in 1..=max_order {
        let k = exact_kernel(poly, space, p)?;
        out.push(factorial(p) * k.norm_sq(space)?);
    }
    Ok(out)
}

/// Γ₀(F, G) as a polynomial in the counts.
pub fn gamma0_polynomial(f: &CountPolynomial, g: &CountPolynomial, space: &DiscreteSpace) -> Result<CountPolynomial> {
    let n = f.n_cells();
    let mut acc = CountPolynomial::zero(n)?;
    for z in 0..n {
        let plus = f.add_one_cost(z)?.mul(&g.add_one_cost(z)?)?.scaled(space.mass(z));
        let minus = f
            .backward_difference(z)?
            .mul(&g.backward_difference(z)?)?
            .mul_count(z)?;
        acc = acc.add(&plus)?.add(&minus)?;
    }
    Ok(acc.scaled(0.5))
}

/// LF as a polynomial in the counts.
pub fn generator_polynomial(f: &CountPolynomial, space: &DiscreteSpace) -> Result<CountPolynomial> {
    let n = f.n_cells();
    let mut acc = CountPolynomial::zero(n)?;
    for z in 0..n {
        let plus = f.add_one_cost(z)?.scaled(space.mass(z));
        let minus = f.backward_difference(z)?.mul_count(z)?;
        acc = acc.add(&plus)?.sub(&minus)?;
    }
    Ok(acc)
}

/// E[h(η)] for an arbitrary functional by enumerating count vectors.
///
/// Each cell is truncated where its Poisson tail drops below `tail`; the
/// returned pair is (expectation over the truncated box, probability mass
/// outside it).
pub fn truncated_expectation<H>(space: &DiscreteSpace, tail: f64, max_configs: u64, h: H) -> Result<(f64, f64)>
where
    H: Fn(&PointConfig) -> f64,
{
    let mut pmfs: Vec<Vec<f64>> = Vec::with_capacity(space.n_cells());
    let mut total = 1u64;
    let mut covered = 1.0;
    for &mu in space.masses() {
        let mut p = (-mu).exp();
        let mut cdf = p;
        let mut pmf = vec![p];
        let mut k = 0u32;
        while 1.0 - cdf > tail && p > 0.0 || f64::from(k) < mu {
            k += 1;
            p *= mu / f64::from(k);
            cdf += p;
            pmf.push(p);
        }
        covered *= pmf.iter().sum::<f64>();
        total = total.saturating_mul(pmf.len() as u64);
        pmfs.push(pmf);
    }
    if total > max_configs {
        return Err(Error::InstanceTooLarge(format!(
            "{total} configurations exceed the enumeration cap {max_configs}"
        )));
    }
    let n = space.n_cells();
    let mut config = PointConfig::empty(n);
    let mut acc = 0.0;
    loop {
        let w: f64 = (0..n).map(|i| pmfs[i][config.counts[i] as usize]).product();
        acc += w * h(&config);
        // odometer increment
        let mut i = 0;
        loop {
            if i == n {
                return Ok((acc, 1.0 - covered));
            }
            config.counts[i] += 1;
            if (config.counts[i] as usize) < pmfs[i].len() {
                break;
            }
            config.counts[i] = 0;
            i += 1;
        }
    }
}
