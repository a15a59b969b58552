use chaoskit::chaos::{charlier, estimate_moments, extract_kernel, product_top_kernel_check};
use chaoskit::oracle::exact_moment;
use chaoskit::{ChaosFunctional, DiscreteSpace, Functional, PointConfig, SymKernel};

fn random_kernel(cells: usize, order: usize, salt: f64) -> SymKernel {
    SymKernel::from_fn(cells, order, |i| {
        let s: f64 = i.iter().enumerate().map(|(k, &c)| (k + 1) as f64 * c as f64).sum();
        (s * 1.7 + salt).sin()
    })
    .unwrap()
}

#[test]
fn first_chaos_is_compensated_count() {
    let space = DiscreteSpace::new(vec![1.5, 0.5, 2.0]).unwrap();
    let f = ChaosFunctional::integral(&space, SymKernel::indicator(3, &[0]).unwrap()).unwrap();
    for n in 0..6 {
        let c = PointConfig::new(vec![n, 2, 1]);
        assert!((f.evaluate(&c).unwrap() - (f64::from(n) - 1.5)).abs() < 1e-14);
    }
}

#[test]
fn closed_form_matches_enumeration() {
    let space = DiscreteSpace::new(vec![0.7, 1.2, 2.5]).unwrap();
    let f = ChaosFunctional::constant(&space, 0.3)
        .with_kernel(random_kernel(3, 1, 0.1))
        .unwrap()
        .with_kernel(random_kernel(3, 2, 0.2))
        .unwrap()
        .with_kernel(random_kernel(3, 3, 0.3))
        .unwrap();
    for counts in [[0, 0, 0], [1, 2, 0], [3, 1, 4], [2, 2, 2]] {
        let c = PointConfig::new(counts.to_vec());
        let a = f.evaluate(&c).unwrap();
        let b = f.evaluate_enumerated(&c, 1 << 20).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn charlier_low_orders() {
    for n in 0..8 {
        let x = f64::from(n);
        assert!((charlier(1, n, 2.0) - (x - 2.0)).abs() < 1e-14);
        assert!((charlier(2, n, 2.0) - (x * (x - 1.0) - 4.0 * x + 4.0)).abs() < 1e-12);
    }
}

#[test]
fn disjoint_product_is_a_double_integral() {
    let space = DiscreteSpace::new(vec![1.0, 2.0]).unwrap();
    let a = ChaosFunctional::integral(&space, SymKernel::indicator(2, &[0]).unwrap()).unwrap();
    let b = ChaosFunctional::integral(&space, SymKernel::indicator(2, &[1]).unwrap()).unwrap();
    let ab = ChaosFunctional::integral(
        &space,
        SymKernel::indicator(2, &[0]).unwrap().sym_tensor_product(&SymKernel::indicator(2, &[1]).unwrap()).unwrap(),
    )
    .unwrap();
    for counts in [[0, 0], [1, 3], [4, 0], [2, 5]] {
        let c = PointConfig::new(counts.to_vec());
        let lhs = a.eval(&c) * b.eval(&c);
        assert!((lhs - ab.eval(&c)).abs() < 1e-12);
    }
}

#[test]
fn product_top_kernel_is_symmetrized_tensor() {
    let space = DiscreteSpace::new(vec![0.8, 1.1, 1.9]).unwrap();
    for (p, q) in [(1, 1), (1, 2), (2, 2)] {
        let r = product_top_kernel_check(&space, &random_kernel(3, p, 0.4), &random_kernel(3, q, 0.9)).unwrap();
        assert!(r.max_abs_diff <= 1e-9, "({p},{q}): {}", r.max_abs_diff);
    }
}

#[test]
fn kernel_extraction() {
    let space = DiscreteSpace::new(vec![1.0, 2.0, 1.5]).unwrap();
    let k2 = random_kernel(3, 2, 0.5);
    let f = ChaosFunctional::integral(&space, k2.clone()).unwrap();
    let e2 = extract_kernel(&f, &space, 2, 20_000, 3).unwrap();
    assert!(e2.max_z_score(&k2).unwrap() <= 4.0);
    let e3 = extract_kernel(&f, &space, 3, 2_000, 3).unwrap();
    assert!(e3.mean.values().iter().all(|v| v.abs() < 1e-9));
    assert!(extract_kernel(&f, &space, 0, 100, 3).is_err());
}

#[test]
fn moments_agree_with_oracle() {
    let space = DiscreteSpace::new(vec![1.0, 1.5]).unwrap();
    let f = ChaosFunctional::integral(&space, random_kernel(2, 2, 0.2)).unwrap();
    let est = estimate_moments(&f, &space, &[2, 3], 200_000, 11).unwrap();
    for m in est {
        let exact = exact_moment(&f, m.order).unwrap();
        assert!(m.raw.z_score(exact) <= 4.0, "order {}: {:?} vs {exact}", m.order, m.raw);
    }
    assert!((exact_moment(&f, 2).unwrap() - f.variance()).abs() < 1e-9);
}

#[test]
fn functional_json_round_trip() {
    let space = DiscreteSpace::uniform(2, 1.0).unwrap();
    let json = r#"{"constant": 1.0, "kernels": {"1": {"order": 1, "entries": [{"idx": [0], "val": 2.0}]}}}"#;
    let f = ChaosFunctional::from_json(json, &space).unwrap();
    assert_eq!(f.constant_term(), 1.0);
    let back = ChaosFunctional::from_json(&f.to_json_value().to_string(), &space).unwrap();
    let c = PointConfig::new(vec![3, 1]);
    assert_eq!(f.eval(&c), back.eval(&c));
    assert!(ChaosFunctional::from_json(r#"{"kernels": {"2": {"order": 1, "entries": []}}}"#, &space).is_err());
}
