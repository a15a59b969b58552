use chaoskit::stein::{
    d2_lower_bound, ks_distance, sample_moment, sample_target, stein_g, stein_properties, w1_distance,
    w1_distance_quadrature, Sample, Target, STEIN_G_BOUND,
};
use std::f64::consts::PI;

#[test]
fn point_mass_at_zero() {
    let s = Sample::new(vec![0.0]).unwrap();
    assert!((w1_distance(&s, &Target::Normal) - (2.0 / PI).sqrt()).abs() < 1e-14);
    assert!((ks_distance(&s, &Target::Normal) - 0.5).abs() < 1e-15);
}

#[test]
fn empty_or_nan_samples_are_rejected() {
    assert!(Sample::new(vec![]).is_err());
    assert!(Sample::new(vec![1.0, f64::NAN]).is_err());
    assert!(Target::centered_gamma(0.0).is_err());
}

#[test]
fn closed_form_w1_matches_quadrature() {
    for target in [Target::Normal, Target::centered_gamma(3.0).unwrap()] {
        let s = sample_target(&target, 200, 7).unwrap().shifted(0.1);
        let a = w1_distance(&s, &target);
        let b = w1_distance_quadrature(&s, &target, 1e-10);
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn ks_is_within_dkw_band() {
    let n = 20_000;
    let s = sample_target(&Target::Normal, n, 3).unwrap();
    // P(KS > ε) ≤ 2 exp(−2nε²) = 1e-6
    let eps = ((2.0f64 / 1e-6).ln() / (2.0 * n as f64)).sqrt();
    assert!(ks_distance(&s, &Target::Normal) <= eps);
}

#[test]
fn ks_is_controlled_by_w1() {
    let t = Target::Normal;
    for (seed, shift) in [(1, 0.0), (2, 0.3), (3, 1.5)] {
        let s = sample_target(&t, 2_000, seed).unwrap().shifted(shift);
        let c = t.density_bound();
        assert!(ks_distance(&s, &t) <= (2.0 * c * w1_distance(&s, &t)).sqrt() + 1e-12);
    }
}

#[test]
fn smooth_distance_is_below_w1() {
    let t = Target::Normal;
    let s = sample_target(&t, 5_000, 9).unwrap().shifted(0.2);
    let d2 = d2_lower_bound(&s, &t, 64).unwrap();
    assert!(d2.value <= w1_distance(&s, &t) + 3.0 * d2.se);
    assert!(d2.value > 0.1);
    assert!(d2_lower_bound(&s, &t, 0).is_err());
}

#[test]
fn quantile_grid_is_close_to_target() {
    let g = Target::centered_gamma(2.0).unwrap();
    let s = Sample::quantile_grid(&g, 10_000);
    assert!(w1_distance(&s, &g) < 1e-2);
    assert!(ks_distance(&s, &g) <= 0.5 / 10_000.0 + 1e-12);
}

#[test]
fn gamma_draws_have_the_right_moments() {
    for nu in [1.0, 2.0, 8.0] {
        let t = Target::centered_gamma(nu).unwrap();
        let n = 400_000;
        let s = sample_target(&t, n, 17).unwrap();
        let m2 = sample_moment(&s, 2);
        assert!((m2 - 2.0 * nu).abs() < 5.0 * (t.moment(4) - 4.0 * nu * nu).sqrt() / (n as f64).sqrt());
        assert!(sample_moment(&s, 1).abs() < 5.0 * (2.0 * nu / n as f64).sqrt());
        // E Z⁴ − 12 E Z³ = 12ν² − 48ν
        assert!((t.moment(4) - 12.0 * t.moment(3) - (12.0 * nu * nu - 48.0 * nu)).abs() < 1e-12);
        let lhs = sample_moment(&s, 4) - 12.0 * sample_moment(&s, 3);
        let rel = (lhs - (12.0 * nu * nu - 48.0 * nu)).abs() / (12.0 * nu * nu + 48.0 * nu);
        assert!(rel < 0.05, "ν = {nu}: {lhs}");
    }
}

#[test]
fn stein_solution_properties() {
    let r = stein_properties(60, 5_000, 1);
    assert!(r.all_hold(1e-8), "{r:?}");
    assert!(r.g_max <= STEIN_G_BOUND + 1e-12);
    assert!(stein_g(0.0, 0.0) > 0.0);
}
