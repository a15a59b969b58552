//! Targets, distances to a target law, and the Stein solution for
//! half-line indicators.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::special::{
    gamma_p, gamma_pdf, gamma_q, gamma_quantile, integrate, mills_ratio, normal_cdf, normal_cdf_integral,
    normal_pdf, normal_quantile, normal_sf, normal_sf_integral, regularized_gamma, SQRT_2PI,
};
use crate::stats::{mean, mean_se};

/// √(2π)/4, the sup-norm bound of the Stein solution.
pub const STEIN_G_BOUND: f64 = SQRT_2PI / 4.0;

/// Limiting law: standard normal or centered Gamma `2·X_{ν/2} − ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Normal,
    CenteredGamma { nu: f64 },
}

impl Target {
    pub fn centered_gamma(nu: f64) -> Result<Self> {
        if nu.is_finite() && nu > 0.0 {
            Ok(Target::CenteredGamma { nu })
        } else {
            Err(Error::InvalidParameter(format!("ν must be positive, got {nu}")))
        }
    }

    fn shape(nu: f64) -> f64 {
        0.5 * nu
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Target::Normal => 1.0,
            Target::CenteredGamma { nu } => 2.0 * nu,
        }
    }

    /// E[Z^k] for k ≤ 4.
    pub fn moment(&self, k: u32) -> f64 {
        match (*self, k) {
            (_, 0) => 1.0,
            (_, 1) => 0.0,
            (Target::Normal, 2) => 1.0,
            (Target::Normal, 3) => 0.0,
            (Target::Normal, 4) => 3.0,
            (Target::CenteredGamma { nu }, 2) => 2.0 * nu,
            (Target::CenteredGamma { nu }, 3) => 8.0 * nu,
            (Target::CenteredGamma { nu }, 4) => 48.0 * nu + 12.0 * nu * nu,
            _ => panic!("moments above order 4 are not tabulated"),
        }
    }

    /// Lower end of the support.
    pub fn support_min(&self) -> f64 {
        match *self {
            Target::Normal => f64::NEG_INFINITY,
            Target::CenteredGamma { nu } => -nu,
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            Target::Normal => normal_cdf(t),
            Target::CenteredGamma { nu } => gamma_p(Self::shape(nu), 0.5 * (t + nu)),
        }
    }

    pub fn sf(&self, t: f64) -> f64 {
        match *self {
            Target::Normal => normal_sf(t),
            Target::CenteredGamma { nu } => gamma_q(Self::shape(nu), 0.5 * (t + nu)),
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match *self {
            Target::Normal => normal_pdf(t),
            Target::CenteredGamma { nu } => 0.5 * gamma_pdf(Self::shape(nu), 0.5 * (t + nu)),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Target::Normal => normal_quantile(p),
            Target::CenteredGamma { nu } => 2.0 * gamma_quantile(Self::shape(nu), p) - nu,
        }
    }

    /// sup of the density; infinite for a centered Gamma with ν < 2.
    pub fn density_bound(&self) -> f64 {
        match *self {
            Target::Normal => 1.0 / SQRT_2PI,
            Target::CenteredGamma { nu } => {
                let k = Self::shape(nu);
                if k < 1.0 {
                    f64::INFINITY
                } else {
                    0.5 * gamma_pdf(k, k - 1.0)
                }
            }
        }
    }

    /// ∫_{-∞}^t G = E[(t − Z)^+].
    pub fn cdf_integral(&self, t: f64) -> f64 {
        match *self {
            Target::Normal => normal_cdf_integral(t),
            Target::CenteredGamma { nu } => {
                let k = Self::shape(nu);
                let a = 0.5 * (t + nu);
                if a <= 0.0 {
                    return 0.0;
                }
                2.0 * (a * gamma_p(k, a) - k * gamma_p(k + 1.0, a)).max(0.0)
            }
        }
    }

    /// ∫_t^∞ (1 − G) = E[(Z − t)^+].
    pub fn sf_integral(&self, t: f64) -> f64 {
        match *self {
            Target::Normal => normal_sf_integral(t),
            Target::CenteredGamma { nu } => {
                let k = Self::shape(nu);
                let a = 0.5 * (t + nu);
                if a <= 0.0 {
                    return -t;
                }
                let (_, q0) = regularized_gamma(k, a);
                let (_, q1) = regularized_gamma(k + 1.0, a);
                2.0 * (k * q1 - a * q0).max(0.0)
            }
        }
    }

    /// Point beyond which the upper tail is negligible (< 1e−18).
    fn upper_cut(&self) -> f64 {
        match *self {
            Target::Normal => 9.0,
            Target::CenteredGamma { nu } => {
                let mut t = nu.max(1.0);
                while self.sf(t) > 1e-18 {
                    t *= 1.5;
                }
                t
            }
        }
    }

    fn lower_cut(&self) -> f64 {
        match *self {
            Target::Normal => -9.0,
            Target::CenteredGamma { nu } => -nu,
        }
    }
}

/// Sorted observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    /// Sort the observations; fails on an empty or non-finite input.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("sample is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("sample contains non-finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shifted(&self, a: f64) -> Sample {
        Sample {
            values: self.values.iter().map(|v| v + a).collect(),
        }
    }

    /// Target quantiles at (i − ½)/n.
    pub fn quantile_grid(target: &Target, n: usize) -> Sample {
        Sample {
            values: (0..n)
                .map(|i| target.quantile((i as f64 + 0.5) / n as f64))
                .collect(),
        }
    }
}

/// i.i.d. draws from the target; the Gamma law uses Marsaglia–Tsang.
pub fn sample_target(target: &Target, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let mut rng = SeedTree::new(seed).child("target").rng(0);
    let values = match *target {
        Target::Normal => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        Target::CenteredGamma { nu } => {
            let g = Gamma::new(0.5 * nu, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (0..n).map(|_| 2.0 * g.sample(&mut rng) - nu).collect()
        }
    };
    Sample::new(values)
}

/// ∫ |F_n − G| using the closed-form antiderivatives of G.
pub fn w1_distance(sample: &Sample, target: &Target) -> f64 {
    let x = sample.values();
    let n = x.len() as f64;
    let mut total = target.cdf_integral(x[0]) + target.sf_integral(x[x.len() - 1]);
    for i in 1..x.len() {
        let (a, b) = (x[i - 1], x[i]);
        if b <= a {
            continue;
        }
        let c = i as f64 / n;
        // split where G crosses the level c
        let t = target.quantile(c).clamp(a, b);
        let ga = target.cdf_integral(a);
        let gt = target.cdf_integral(t);
        let gb = target.cdf_integral(b);
        total += c * (t - a) - (gt - ga) + (gb - gt) - c * (b - t);
    }
    total
}

/// ∫ |F_n − G| by adaptive quadrature between order statistics.
pub fn w1_distance_quadrature(sample: &Sample, target: &Target, tol: f64) -> f64 {
    let x = sample.values();
    let n = x.len() as f64;
    let per = tol / (x.len() as f64 + 2.0);
    let lo = target.lower_cut().min(x[0]);
    let hi = target.upper_cut().max(x[x.len() - 1]);
    let mut total = integrate(|t| target.cdf(t), lo, x[0], per);
    total += integrate(|t| target.sf(t), x[x.len() - 1], hi, per);
    for i in 1..x.len() {
        let c = i as f64 / n;
        total += integrate(|t| (c - target.cdf(t)).abs(), x[i - 1], x[i], per);
    }
    total
}

/// sup_x |F_n(x) − G(x)| by the two-sided scan over order statistics.
pub fn ks_distance(sample: &Sample, target: &Target) -> f64 {
    let x = sample.values();
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < x.len() {
        // group ties so the jump is taken all at once
        let mut j = i;
        while j + 1 < x.len() && x[j + 1] == x[i] {
            j += 1;
        }
        let g = target.cdf(x[i]);
        d = d.max(g - i as f64 / n).max((j + 1) as f64 / n - g);
        i = j + 1;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SmoothShape {
    /// s·tanh((x − c)/s)
    Tanh,
    /// s·log cosh((x − c)/s)
    LogCosh,
}

/// A test function with ‖h′‖∞ = 1 and ‖h″‖∞ ≤ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub shape: SmoothShape,
    pub scale: f64,
    pub center: f64,
}

fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl TestFunction {
    pub fn value(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        match self.shape {
            SmoothShape::Tanh => self.scale * u.tanh(),
            SmoothShape::LogCosh => self.scale * log_cosh(u),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        match self.shape {
            SmoothShape::Tanh => 1.0 / u.cosh().powi(2),
            SmoothShape::LogCosh => u.tanh(),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        let sech2 = 1.0 / u.cosh().powi(2);
        match self.shape {
            SmoothShape::Tanh => -2.0 * sech2 * u.tanh() / self.scale,
            SmoothShape::LogCosh => sech2 / self.scale,
        }
    }

    /// E h(Z) = h(z₀) + ∫_{z₀}^∞ h′(1 − G) − ∫_{−∞}^{z₀} h′ G.
    pub fn expectation(&self, target: &Target) -> f64 {
        let z0 = match target {
            Target::Normal => 0.0,
            Target::CenteredGamma { nu } => -nu,
        };
        let tol = 1e-13;
        let hi = target.upper_cut().max(self.center + 40.0 * self.scale);
        let mut e = self.value(z0);
        e += integrate_split(|t| self.derivative(t) * target.sf(t), z0, hi, self.center, tol);
        if let Target::Normal = target {
            let lo = target.lower_cut().min(self.center - 40.0 * self.scale);
            e -= integrate_split(|t| self.derivative(t) * target.cdf(t), lo, z0, self.center, tol);
        }
        e
    }
}

fn integrate_split<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, mid: f64, tol: f64) -> f64 {
    if mid > a && mid < b {
        integrate(f, a, mid, tol) + integrate(f, mid, b, tol)
    } else {
        integrate(f, a, b, tol)
    }
}

/// Number of functions in the built-in d₂ family.
pub const D2_FAMILY_SIZE: usize = 64;

/// Two shapes × scales {1,2,4,8} × 8 centers spread over ±2.5 target sd.
pub fn d2_family(target: &Target) -> Vec<TestFunction> {
    let sd = target.variance().sqrt();
    let shift = target.mean();
    let mut out = Vec::with_capacity(D2_FAMILY_SIZE);
    for shape in [SmoothShape::Tanh, SmoothShape::LogCosh] {
        for scale in [1.0, 2.0, 4.0, 8.0] {
            for i in 0..8 {
                let center = shift + sd * (-2.5 + 5.0 * i as f64 / 7.0);
                out.push(TestFunction { shape, scale, center });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D2Estimate {
    /// max_h |mean h(sample) − E h(target)|.
    pub value: f64,
    /// Index of the maximizing function in the family.
    pub argmax: usize,
    /// Standard error of the maximizing term.
    pub se: f64,
    /// Largest standard error over the family.
    pub max_se: f64,
}

/// Lower bound for d₂ from the first `k` functions of the built-in family.
pub fn d2_lower_bound(sample: &Sample, target: &Target, k: usize) -> Result<D2Estimate> {
    if k == 0 || k > D2_FAMILY_SIZE {
        return Err(Error::InvalidParameter(format!(
            "family size must be in 1..={D2_FAMILY_SIZE}, got {k}"
        )));
    }
    let family = d2_family(target);
    let terms: Vec<(f64, f64)> = family[..k]
        .par_iter()
        .map(|h| {
            let vals: Vec<f64> = sample.values().iter().map(|&x| h.value(x)).collect();
            let est = mean_se(&vals);
            ((est.value - h.expectation(target)).abs(), est.se)
        })
        .collect();
    let (argmax, &(value, se)) = terms
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("nonempty family");
    Ok(D2Estimate {
        value,
        argmax,
        se,
        max_se: terms.iter().map(|t| t.1).fold(0.0, f64::max),
    })
}

/// Bounded solution of g′(w) − w g(w) = 1{w ≤ x} − Φ(x):
/// g_x(w) = √(2π) e^{w²/2} Φ(min(w,x)) (1 − Φ(max(w,x))).
pub fn stein_g(x: f64, w: f64) -> f64 {
    let a = w.min(x);
    let b = w.max(x);
    // Φ(a) = φ(a)·M(−a) for a < 0, 1 − Φ(b) = φ(b)·M(b) for b > 0
    let mut expo = 0.5 * w * w;
    let mut scale = SQRT_2PI;
    let left = if a < 0.0 {
        expo -= 0.5 * a * a;
        scale /= SQRT_2PI;
        mills_ratio(-a)
    } else {
        normal_cdf(a)
    };
    let right = if b > 0.0 {
        expo -= 0.5 * b * b;
        scale /= SQRT_2PI;
        mills_ratio(b)
    } else {
        normal_sf(b)
    };
    scale * expo.exp() * left * right
}

/// g′_x(w) = w g_x(w) + 1{w ≤ x} − Φ(x), including w = x.
pub fn stein_g_prime(x: f64, w: f64) -> f64 {
    let ind = if w <= x { 1.0 } else { 0.0 };
    w * stein_g(x, w) + ind - normal_cdf(x)
}

/// Outcome of the Stein-solution property checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinPropertyReport {
    pub grid_points: usize,
    pub random_tuples: usize,
    /// max |g′ − w g − (1{w≤x} − Φ(x))| with g′ by finite differences, w ≠ x.
    pub equation_residual: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub max_abs_derivative: f64,
    /// Largest lhs − rhs over the random tuples; ≤ 0 means the inequality held.
    pub lipschitz_violation: f64,
    pub forward_taylor_violation: f64,
    pub backward_taylor_violation: f64,
}

impl SteinPropertyReport {
    pub fn all_hold(&self, residual_tol: f64) -> bool {
        self.equation_residual <= residual_tol
            && self.g_min > 0.0
            && self.g_max <= STEIN_G_BOUND * (1.0 + 1e-14)
            && self.max_abs_derivative <= 1.0 + 1e-14
            && self.lipschitz_violation <= 0.0
            && self.forward_taylor_violation <= 0.0
            && self.backward_taylor_violation <= 0.0
    }
}

fn in_half_open(x: f64, lo: f64, hi: f64) -> f64 {
    if lo <= x && x < hi {
        1.0
    } else {
        0.0
    }
}

/// Check the Stein solution on a `side × side` grid and on `tuples` random tuples.
pub fn stein_properties(side: usize, tuples: usize, seed: u64) -> SteinPropertyReport {
    const FD_STEP: f64 = 1e-3;
    let grid = |i: usize, lo: f64, hi: f64| lo + (hi - lo) * i as f64 / (side - 1).max(1) as f64;
    let mut residual: f64 = 0.0;
    let mut g_min = f64::INFINITY;
    let mut g_max: f64 = 0.0;
    let mut dmax: f64 = 0.0;
    for i in 0..side {
        let x = grid(i, -4.0, 4.0);
        for j in 0..side {
            let w = grid(j, -6.0, 6.0);
            let g = stein_g(x, w);
            g_min = g_min.min(g);
            g_max = g_max.max(g);
            dmax = dmax.max(stein_g_prime(x, w).abs());
            if (w - x).abs() > 2.5 * FD_STEP {
                let h = FD_STEP;
                let fd = (-stein_g(x, w + 2.0 * h) + 8.0 * stein_g(x, w + h) - 8.0 * stein_g(x, w - h)
                    + stein_g(x, w - 2.0 * h))
                    / (12.0 * h);
                let ind = if w <= x { 1.0 } else { 0.0 };
                residual = residual.max((fd - w * g - (ind - normal_cdf(x))).abs());
            }
        }
    }
    let mut rng = SeedTree::new(seed).child("stein").rng(0);
    let step = |rng: &mut crate::rng::ReplicateRng| {
        let mag = 10f64.powf(rng.random_range(-3.0..0.5));
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    };
    let (mut vd, mut vf, mut vg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let slack = |scale: f64| 1e-13 * scale.max(1.0);
    for _ in 0..tuples {
        let x = rng.random_range(-4.0..4.0);
        let w = rng.random_range(-5.0..5.0);
        let (u, v, h) = (step(&mut rng), step(&mut rng), step(&mut rng));
        let lhs = ((w + u) * stein_g(x, w + u) - (w + v) * stein_g(x, w + v)).abs();
        let rhs = (w.abs() + STEIN_G_BOUND) * (u.abs() + v.abs());
        vd = vd.max(lhs - rhs - slack(rhs));
        let gp = stein_g_prime(x, w);
        let lhs = (stein_g(x, w + h) - stein_g(x, w) - gp * h).abs();
        let rhs = 0.5 * h * h * (w.abs() + STEIN_G_BOUND)
            + h.abs() * (in_half_open(x, w, w + h) + in_half_open(x, w + h, w));
        vf = vf.max(lhs - rhs - slack(rhs));
        let lhs = (stein_g(x, w) - stein_g(x, w - h) - gp * h).abs();
        let rhs = 1.5 * h * h * ((w - h).abs() + STEIN_G_BOUND)
            + h.abs() * (in_half_open(x, w - h, w) + in_half_open(x, w, w - h));
        vg = vg.max(lhs - rhs - slack(rhs));
    }
    SteinPropertyReport {
        grid_points: side * side,
        random_tuples: tuples,
        equation_residual: residual,
        g_min,
        g_max,
        max_abs_derivative: dmax,
        lipschitz_violation: vd,
        forward_taylor_violation: vf,
        backward_taylor_violation: vg,
    }
}

/// Sample mean of a column; convenience for moment identities on target draws.
pub fn sample_moment(sample: &Sample, k: i32) -> f64 {
    let v: Vec<f64> = sample.values().iter().map(|x| x.powi(k)).collect();
    mean(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_sample_distances() {
        let zeros = Sample::new(vec![0.0; 10]).unwrap();
        let w = w1_distance(&zeros, &Target::Normal);
        assert!((w - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
        assert!((ks_distance(&zeros, &Target::Normal) - 0.5).abs() < 1e-15);
        assert!(d2_lower_bound(&zeros, &Target::Normal, 64).unwrap().value > 0.0);
    }

    #[test]
    fn quantile_grid_distance_shrinks_like_one_over_n() {
        let t = Target::Normal;
        let d1 = w1_distance(&Sample::quantile_grid(&t, 1000), &t);
        let d2 = w1_distance(&Sample::quantile_grid(&t, 10_000), &t);
        assert!(d2 < d1 && d1 < 0.01);
        assert!(d1 / d2 > 5.0);
    }

    #[test]
    fn translation_changes_distance_by_the_shift() {
        let t = Target::Normal;
        let base = Sample::quantile_grid(&t, 5000);
        let d0 = w1_distance(&base, &t);
        for a in [-1.5, 0.3, 2.0] {
            let d = w1_distance(&base.shifted(a), &t);
            assert!((d - a.abs()).abs() <= d0 + 1e-12);
        }
    }

    #[test]
    fn closed_form_w1_matches_quadrature() {
        for t in [Target::Normal, Target::CenteredGamma { nu: 1.0 }, Target::CenteredGamma { nu: 3.0 }] {
            let s = sample_target(&t, 200, 3).unwrap().shifted(0.1);
            let a = w1_distance(&s, &t);
            let b = w1_distance_quadrature(&s, &t, 1e-9);
            assert!((a - b).abs() < 1e-8, "{t:?}: {a} vs {b}");
        }
    }

    #[test]
    fn ks_matches_brute_force_grid() {
        let t = Target::Normal;
        let s = sample_target(&t, 30, 9).unwrap();
        let x = s.values();
        let mut brute: f64 = 0.0;
        for i in 0..=200_000 {
            let y = -5.0 + 10.0 * i as f64 / 200_000.0;
            let fn_y = x.iter().filter(|&&v| v <= y).count() as f64 / x.len() as f64;
            brute = brute.max((fn_y - t.cdf(y)).abs());
        }
        let d = ks_distance(&s, &t);
        assert!(d >= brute - 1e-12 && d - brute < 1e-3);
    }

    #[test]
    fn gamma_antiderivatives_are_consistent() {
        let t = Target::CenteredGamma { nu: 1.5 };
        // E[(t − Z)^+] − E[(Z − t)^+] = t − E Z = t
        for x in [-1.0, 0.0, 0.7, 4.0] {
            assert!((t.cdf_integral(x) - t.sf_integral(x) - x).abs() < 1e-12);
        }
        assert_eq!(t.cdf_integral(-2.0), 0.0);
    }

    #[test]
    fn family_has_bounded_derivatives() {
        for target in [Target::Normal, Target::CenteredGamma { nu: 2.0 }] {
            let fam = d2_family(&target);
            assert_eq!(fam.len(), D2_FAMILY_SIZE);
            for h in &fam {
                let mut d1: f64 = 0.0;
                let mut d2: f64 = 0.0;
                for i in 0..4001 {
                    let x = h.center - 40.0 + 0.02 * i as f64;
                    d1 = d1.max(h.derivative(x).abs());
                    d2 = d2.max(h.second_derivative(x).abs());
                }
                assert!(d1 <= 1.0 + 1e-15 && d1 > 0.999);
                assert!(d2 <= 1.0);
            }
        }
    }

    #[test]
    fn test_function_expectations() {
        // odd functions centered at 0 have zero normal expectation
        let h = TestFunction {
            shape: SmoothShape::Tanh,
            scale: 2.0,
            center: 0.0,
        };
        assert!(h.expectation(&Target::Normal).abs() < 1e-13);
        let t = Target::CenteredGamma { nu: 1.0 };
        let g = TestFunction {
            shape: SmoothShape::LogCosh,
            scale: 1.0,
            center: 0.5,
        };
        let sample = sample_target(&t, 200_000, 5).unwrap();
        let v: Vec<f64> = sample.values().iter().map(|&x| g.value(x)).collect();
        let e = mean_se(&v);
        assert!(e.within(g.expectation(&t), 4.0));
    }

    #[test]
    fn gamma_draws_satisfy_moment_identity() {
        for nu in [1.0, 2.0, 8.0] {
            let t = Target::CenteredGamma { nu };
            assert!((t.moment(4) - 12.0 * t.moment(3) - 12.0 * nu * nu + 48.0 * nu).abs() < 1e-12);
            let s = sample_target(&t, 100_000, 7).unwrap();
            let m = sample_moment(&s, 1);
            assert!(m.abs() < 3.0 * (2.0 * nu / 1e5f64).sqrt());
        }
    }

    #[test]
    fn stein_solution_properties() {
        let r = stein_properties(100, 10_000, 1);
        assert!(r.all_hold(1e-10), "{r:?}");
        assert!((stein_g(0.0, 0.0) - STEIN_G_BOUND).abs() < 1e-15);
        // far tails stay finite and positive
        assert!(stein_g(2.0, -40.0) > 0.0 && stein_g(-2.0, 40.0) > 0.0);
    }
}
