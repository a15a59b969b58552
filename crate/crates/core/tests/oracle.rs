use chaoskit::oracle::{
    exact_kernel, exact_moment, exact_product_expectation, generator_polynomial, projection_variances, to_polynomial,
    touchard,
};
use chaoskit::{ChaosFunctional, CountPolynomial, DiscreteSpace, PointConfig, SymKernel};

#[test]
fn touchard_values() {
    assert_eq!(touchard(0, 3.0), 1.0);
    assert_eq!(touchard(1, 3.0), 3.0);
    assert_eq!(touchard(2, 3.0), 12.0);
    assert_eq!(touchard(3, 1.0), 5.0);
    assert_eq!(touchard(4, 1.0), 15.0);
}

#[test]
fn compensated_count_fourth_moment() {
    for mu in [0.3, 1.0, 2.5, 10.0] {
        let space = DiscreteSpace::new(vec![mu]).unwrap();
        let f = ChaosFunctional::integral(&space, SymKernel::indicator(1, &[0]).unwrap()).unwrap();
        let m4 = exact_moment(&f, 4).unwrap();
        assert!((m4 - (3.0 * mu * mu + mu)).abs() < 1e-9 * m4, "μ = {mu}");
        assert!((exact_moment(&f, 3).unwrap() - mu).abs() < 1e-10);
    }
}

#[test]
fn isometry_and_orthogonality() {
    let space = DiscreteSpace::new(vec![0.5, 1.5, 1.0]).unwrap();
    let k1 = SymKernel::from_fn(3, 1, |i| i[0] as f64 - 0.5).unwrap();
    let k2 = SymKernel::from_fn(3, 2, |i| ((i[0] + 1) * (i[1] + 2)) as f64 / 4.0).unwrap();
    let k2b = SymKernel::from_fn(3, 2, |i| (i[0] as f64 - i[1] as f64).powi(2)).unwrap();
    let a = ChaosFunctional::integral(&space, k1).unwrap();
    let b = ChaosFunctional::integral(&space, k2.clone()).unwrap();
    let c = ChaosFunctional::integral(&space, k2b.clone()).unwrap();
    assert!(exact_product_expectation(&a, &b).unwrap().abs() < 1e-9);
    let iso = 2.0 * k2.inner(&k2b, &space).unwrap();
    assert!((exact_product_expectation(&b, &c).unwrap() - iso).abs() < 1e-9);
    assert!((exact_moment(&b, 1).unwrap()).abs() < 1e-9);
}

#[test]
fn decomposition_recovers_kernels() {
    let space = DiscreteSpace::new(vec![0.7, 1.3]).unwrap();
    let k2 = SymKernel::from_fn(2, 2, |i| 1.0 + (i[0] * 2 + i[1]) as f64).unwrap();
    let f = ChaosFunctional::constant(&space, 0.25).with_kernel(k2.clone()).unwrap();
    let p = to_polynomial(&f).unwrap();
    assert!(exact_kernel(&p, &space, 2).unwrap().max_abs_diff(&k2).unwrap() < 1e-10);
    assert!(exact_kernel(&p, &space, 1).unwrap().values().iter().all(|v| v.abs() < 1e-10));
    assert!(exact_kernel(&p, &space, 3).unwrap().values().iter().all(|v| v.abs() < 1e-10));
    assert!((exact_kernel(&p, &space, 0).unwrap().values()[0] - 0.25).abs() < 1e-12);
    let v = projection_variances(&p, &space, 3).unwrap();
    assert!((v[2] - f.variance()).abs() < 1e-9);
}

#[test]
fn polynomial_matches_pathwise_evaluation() {
    let space = DiscreteSpace::new(vec![0.7, 1.3, 2.0]).unwrap();
    let f = ChaosFunctional::integral(&space, SymKernel::from_fn(3, 3, |i| (i[0] + i[1] * i[2]) as f64).unwrap()).unwrap();
    let p = to_polynomial(&f).unwrap();
    for counts in [[0, 0, 0], [2, 1, 3], [5, 0, 1]] {
        let c = PointConfig::new(counts.to_vec());
        assert!((p.eval(&c) - f.evaluate(&c).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn generator_kills_constants_and_scales_chaoses() {
    let space = DiscreteSpace::new(vec![1.0, 2.0]).unwrap();
    let c = CountPolynomial::constant(2, 4.0).unwrap();
    assert_eq!(generator_polynomial(&c, &space).unwrap().eval_counts(&[3, 1]), 0.0);
    let f = ChaosFunctional::integral(&space, SymKernel::from_fn(2, 2, |i| (i[0] + i[1]) as f64).unwrap()).unwrap();
    let lf = generator_polynomial(&to_polynomial(&f).unwrap(), &space).unwrap();
    for counts in [[0u32, 0], [1, 4], [3, 2]] {
        assert!((lf.eval_counts(&counts) + 2.0 * f.evaluate(&PointConfig::new(counts.to_vec())).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn count_polynomial_algebra() {
    let x = CountPolynomial::count(2, 0).unwrap();
    let y = CountPolynomial::count(2, 1).unwrap();
    let p = x.mul(&y).unwrap().add(&x.pow(2).unwrap()).unwrap();
    assert_eq!(p.eval_counts(&[3, 2]), 15.0);
    assert_eq!(p.degree(), 2);
    // D⁺ in cell 0: (x+1)y + (x+1)² − xy − x² = y + 2x + 1
    assert_eq!(p.add_one_cost(0).unwrap().eval_counts(&[3, 2]), 9.0);
    assert!(CountPolynomial::count(2, 2).is_err());
    let space = DiscreteSpace::new(vec![1.0, 2.0]).unwrap();
    assert!((p.expectation(&space).unwrap() - (2.0 + 2.0)).abs() < 1e-12);
}
