//! Special functions: standard normal CDF/quantile/Mills ratio and the
//! regularized incomplete gamma function.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x), accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // one Halley step against the accurate CDF
    let (err, dens) = if x > 0.0 {
        ((1.0 - p) - normal_sf(x), normal_pdf(x))
    } else {
        (normal_cdf(x) - p, normal_pdf(x))
    };
    let err = if x > 0.0 { -err } else { err };
    if dens <= 0.0 {
        return x;
    }
    let u = err / dens;
    x - u / (1.0 + 0.5 * x * u)
}

/// Mills ratio (1 − Φ(t)) / φ(t) for t ≥ 0.
pub fn mills_ratio(t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if t < 8.0 {
        return normal_sf(t) / normal_pdf(t);
    }
    // continued fraction t + 1/(t + 2/(t + 3/(t + ...))), evaluated bottom-up
    let mut acc = t;
    for k in (1..=60).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// Antiderivative of Φ: tΦ(t) + φ(t), which equals E[(t − N)^+].
pub fn normal_cdf_integral(t: f64) -> f64 {
    if t < 0.0 {
        // E[(t − N)^+] = E[(N − |t|)^+] = φ(|t|) − |t|(1 − Φ(|t|)).
        let a = -t;
        normal_pdf(a) * (1.0 - a * mills_ratio(a))
    } else {
        t * normal_cdf(t) + normal_pdf(t)
    }
}

/// E[(N − t)^+] = ∫_t^∞ (1 − Φ).
pub fn normal_sf_integral(t: f64) -> f64 {
    normal_cdf_integral(-t)
}

/// (P(a, x), Q(a, x)): regularized lower and upper incomplete gamma.
pub fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    (gamma_lr(a, x), gamma_ur(a, x))
}

pub fn gamma_p(a: f64, x: f64) -> f64 {
    regularized_gamma(a, x).0
}

pub fn gamma_q(a: f64, x: f64) -> f64 {
    regularized_gamma(a, x).1
}

/// Density of Gamma(shape, rate 1).
pub fn gamma_pdf(shape: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => 1.0,
            _ => 0.0,
        };
    }
    ((shape - 1.0) * x.ln() - x - ln_gamma(shape)).exp()
}

/// Quantile of Gamma(shape, rate 1) by safeguarded Newton iteration.
pub fn gamma_quantile(shape: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut lo = 0.0;
    let mut hi = shape.max(1.0);
    while gamma_p(shape, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = gamma_p(shape, x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = gamma_pdf(shape, x);
        let newton = x - f / dens;
        x = if dens > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    x
}

const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        s += w * (f(c - h * x) + f(c + h * x));
    }
    s * h
}

/// Adaptive 10-point Gauss–Legendre quadrature of `f` over [a, b] with
/// absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = gauss_legendre(f, a, m);
        let right = gauss_legendre(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        step(f, a, m, left, 0.5 * tol, depth - 1) + step(f, m, b, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let whole = gauss_legendre(&f, a, b);
    step(&f, a, b, whole, tol, 40)
}
