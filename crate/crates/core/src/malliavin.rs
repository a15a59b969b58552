//! Pathwise difference operators, carré du champ, generator and
//! divergence on a discrete Poisson space.
//!
//! Sums over the points of a configuration count multiplicity: a cell with
//! `n` points contributes `n` times.

use serde::{Deserialize, Serialize};

use crate::chaos::{ChaosFunctional, Functional};
use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::space::{sample_poisson_with, DiscreteSpace, PointConfig};
use crate::stats::par_replicates;

/// D⁺_z F(χ) = F(χ + δ_z) − F(χ).
pub fn add_one_cost<F: Functional + ?Sized>(f: &F, config: &PointConfig, cell: usize) -> f64 {
    f.eval(&config.plus(cell)) - f.eval(config)
}

/// D⁻_z F(χ) = F(χ) − F(χ − δ_z) if z ∈ χ, else 0.
pub fn remove_one_cost<F: Functional + ?Sized>(f: &F, config: &PointConfig, cell: usize) -> f64 {
    if config.count(cell) == 0 {
        return 0.0;
    }
    f.eval(config) - f.eval(&config.minus(cell))
}

/// Iterated add-one cost D^(n)_{z₁…z_n} F(χ) = Σ_{J⊆[n]} (−1)^{n−|J|} F(χ + Σ_{j∈J} δ_{z_j}).
pub fn iterated<F: Functional + ?Sized>(f: &F, config: &PointConfig, cells: &[usize]) -> f64 {
    let n = cells.len();
    assert!(n < 31, "iterated difference of order {n} is not supported");
    let mut acc = 0.0;
    let mut shifted = config.clone();
    for mask in 0u32..(1 << n) {
        shifted.counts.copy_from_slice(&config.counts);
        for (j, &c) in cells.iter().enumerate() {
            if mask & (1 << j) != 0 {
                shifted.counts[c] += 1;
            }
        }
        let sign = if (n as u32 - mask.count_ones()).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc += sign * f.eval(&shifted);
    }
    acc
}

/// Per-cell add-one and remove-one costs at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorTrace {
    pub value: f64,
    pub d_plus: Vec<f64>,
    pub d_minus: Vec<f64>,
}

impl OperatorTrace {
    pub fn new<F: Functional + ?Sized>(f: &F, space: &DiscreteSpace, config: &PointConfig) -> Self {
        let value = f.eval(config);
        let n = space.n_cells();
        let d_plus = (0..n).map(|z| f.eval(&config.plus(z)) - value).collect();
        let d_minus = (0..n)
            .map(|z| {
                if config.count(z) == 0 {
                    0.0
                } else {
                    value - f.eval(&config.minus(z))
                }
            })
            .collect();
        Self { value, d_plus, d_minus }
    }

    /// LF = Σ_z D⁺_zF μ(z) − Σ_{z∈χ} D⁻_zF.
    pub fn generator(&self, space: &DiscreteSpace, config: &PointConfig) -> f64 {
        let mut acc = 0.0;
        for z in 0..space.n_cells() {
            acc += self.d_plus[z] * space.mass(z) - f64::from(config.count(z)) * self.d_minus[z];
        }
        acc
    }

    /// Γ₀(F, G) from two traces at the same configuration.
    pub fn gamma0(&self, other: &OperatorTrace, space: &DiscreteSpace, config: &PointConfig) -> f64 {
        let mut acc = 0.0;
        for z in 0..space.n_cells() {
            acc += self.d_plus[z] * other.d_plus[z] * space.mass(z)
                + f64::from(config.count(z)) * self.d_minus[z] * other.d_minus[z];
        }
        0.5 * acc
    }
}

/// Γ₀(F,G) = ½[Σ_z D⁺F D⁺G μ(z) + Σ_{z∈χ} D⁻F D⁻G].
pub fn gamma0<F, G>(f: &F, g: &G, space: &DiscreteSpace, config: &PointConfig) -> f64
where
    F: Functional + ?Sized,
    G: Functional + ?Sized,
{
    let tf = OperatorTrace::new(f, space, config);
    let tg = OperatorTrace::new(g, space, config);
    tf.gamma0(&tg, space, config)
}

/// Pathwise Ornstein–Uhlenbeck generator.
pub fn apply_l<F: Functional + ?Sized>(f: &F, space: &DiscreteSpace, config: &PointConfig) -> f64 {
    OperatorTrace::new(f, space, config).generator(space, config)
}

/// L⁻¹: scale each chaos by −1/p. Requires a zero constant term.
pub fn apply_linv(f: &ChaosFunctional) -> Result<ChaosFunctional> {
    if f.constant_term() != 0.0 {
        return Err(Error::NonzeroMean(f.constant_term()));
    }
    Ok(f.map_kernels(0.0, |p, k| k.scaled(-1.0 / p as f64)))
}

/// LF as a chaos expansion: −p on the p-th chaos.
pub fn l_of(f: &ChaosFunctional) -> ChaosFunctional {
    f.map_kernels(0.0, |p, k| k.scaled(-(p as f64)))
}

/// δ(u) = Σ_{z∈χ} u(χ − δ_z, z) − Σ_z u(χ, z) μ(z).
pub fn skorohod<U>(u: U, space: &DiscreteSpace, config: &PointConfig) -> f64
where
    U: Fn(&PointConfig, usize) -> f64,
{
    let mut acc = 0.0;
    for z in 0..space.n_cells() {
        let n = config.count(z);
        if n > 0 {
            acc += f64::from(n) * u(&config.minus(z), z);
        }
        acc -= u(config, z) * space.mass(z);
    }
    acc
}

/// Γ(F,G) = ½(L(FG) − F·LG − G·LF), with FG evaluated as a plain product.
pub fn carre_du_champ<F, G>(f: &F, g: &G, space: &DiscreteSpace, config: &PointConfig) -> f64
where
    F: Functional + ?Sized,
    G: Functional + ?Sized,
{
    let prod = |c: &PointConfig| f.eval(c) * g.eval(c);
    let l_fg = apply_l(&prod, space, config);
    let l_f = apply_l(f, space, config);
    let l_g = apply_l(g, space, config);
    0.5 * (l_fg - f.eval(config) * l_g - g.eval(config) * l_f)
}

/// Largest pathwise discrepancy between Γ and Γ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdcReport {
    pub max_abs: f64,
    /// Residual relative to max(1, |Γ₀|, |F|·|LG|, |G|·|LF|).
    pub max_rel: f64,
    pub configs: usize,
}

pub fn cdcform_check<F, G>(f: &F, g: &G, space: &DiscreteSpace, n: usize, seed: u64) -> CdcReport
where
    F: Functional + ?Sized,
    G: Functional + ?Sized,
{
    let tree = SeedTree::new(seed).child("cdcform");
    let rows = par_replicates(n, |i| {
        let config = sample_poisson_with(space, &mut tree.rng(i));
        let gamma = carre_du_champ(f, g, space, &config);
        let g0 = gamma0(f, g, space, &config);
        let scale = 1f64
            .max(g0.abs())
            .max((f.eval(&config) * apply_l(g, space, &config)).abs())
            .max((g.eval(&config) * apply_l(f, space, &config)).abs());
        let d = (gamma - g0).abs();
        (d, d / scale)
    });
    CdcReport {
        max_abs: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_rel: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        configs: n,
    }
}

/// Relative residuals of the pathwise power and product rules at one
/// (F, G, χ, z): D⁺F², D⁺F³, D⁻F², D⁻F³, D⁺(FG), D⁻(FG).
pub fn identity_residuals<F, G>(f: &F, g: &G, config: &PointConfig, cell: usize) -> [f64; 6]
where
    F: Functional + ?Sized,
    G: Functional + ?Sized,
{
    let plus = config.plus(cell);
    let (f0, g0) = (f.eval(config), g.eval(config));
    let (fp, gp) = (f.eval(&plus), g.eval(&plus));
    let (fm, gm) = if config.count(cell) > 0 {
        let minus = config.minus(cell);
        (f.eval(&minus), g.eval(&minus))
    } else {
        (f0, g0)
    };
    let (dpf, dpg) = (fp - f0, gp - g0);
    let (dmf, dmg) = (f0 - fm, g0 - gm);
    let rel = |lhs: f64, rhs: f64, scale: f64| (lhs - rhs).abs() / scale.max(1.0);
    let s2 = f0.abs().max(fp.abs()).max(fm.abs()).powi(2);
    let s3 = s2 * s2.sqrt();
    let sfg = (f0.abs().max(fp.abs()).max(fm.abs())) * (g0.abs().max(gp.abs()).max(gm.abs()));
    [
        rel(fp * fp - f0 * f0, dpf * dpf + 2.0 * f0 * dpf, s2),
        rel(
            fp.powi(3) - f0.powi(3),
            dpf.powi(3) + 3.0 * f0 * f0 * dpf + 3.0 * f0 * dpf * dpf,
            s3,
        ),
        rel(f0 * f0 - fm * fm, -dmf * dmf + 2.0 * f0 * dmf, s2),
        rel(
            f0.powi(3) - fm.powi(3),
            dmf.powi(3) + 3.0 * f0 * f0 * dmf - 3.0 * f0 * dmf * dmf,
            s3,
        ),
        rel(fp * gp - f0 * g0, g0 * dpf + f0 * dpg + dpf * dpg, sfg),
        rel(f0 * g0 - fm * gm, g0 * dmf + f0 * dmg - dmf * dmg, sfg),
    ]
}
