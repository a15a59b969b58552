use chaoskit::bounds::{
    estimate_ingredients, fm_gamma_rhs, fm_kol_rhs, fm_w1_rhs, fm_w1_rhs_simple, fm_w1_simple_coefficient,
    gamma_constants, lemma_suite, write_bound_csv, BoundKind, LhsDistances, Mode,
};
use chaoskit::harness::{chain_functional, gamma_functional};
use chaoskit::stats::Estimate;
use chaoskit::stein::Target;
use chaoskit::{ChaosFunctional, DiscreteSpace, SymKernel};

#[test]
fn w1_rhs_values() {
    for q in 1..6 {
        assert_eq!(fm_w1_rhs(q, 3.0).unwrap().value, 0.0);
    }
    assert!((fm_w1_simple_coefficient() - 2.797884560802865).abs() < 1e-14);
    let q1 = fm_w1_rhs(1, 4.0).unwrap().value;
    assert!((q1 - ((2.0 / std::f64::consts::PI).sqrt() / 2.0 + 3f64.sqrt())).abs() < 1e-14);
    assert!((q1 - 2.13096).abs() < 5e-5);
    assert!((fm_w1_rhs_simple(7.0).value - 2.0 * fm_w1_simple_coefficient()).abs() < 1e-12);
    assert!(fm_w1_rhs(0, 4.0).is_err());
}

#[test]
fn noise_flag_clamps() {
    let r = fm_w1_rhs_simple(2.9);
    assert_eq!(r.value, 0.0);
    assert!(r.noise);
    assert!(fm_kol_rhs(2.99).noise);
    assert!(!fm_kol_rhs(3.5).noise);
}

#[test]
fn kolmogorov_rhs_values() {
    assert_eq!(fm_kol_rhs(3.0).value, 0.0);
    let expected = 11.0 + 2.0 * 2f64.sqrt() * (2.0 + 2f64.sqrt());
    assert!((fm_kol_rhs(4.0).value - expected).abs() < 1e-12);
    assert!((fm_kol_rhs(4.0).value - 20.657).abs() < 1e-3);
    let grid: Vec<f64> = (0..200).map(|i| fm_kol_rhs(3.0 + 0.05 * i as f64).value).collect();
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn gamma_rhs_values() {
    let (c1, c2) = gamma_constants(2.0).unwrap();
    assert!((c1 - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    assert!((c2 - (1.0 / 6f64.sqrt() + 2.0)).abs() < 1e-12);
    assert!(gamma_constants(0.0).is_err());
    for nu in [0.5, 1.0, 2.0, 7.0] {
        let t = Target::centered_gamma(nu).unwrap();
        assert!(fm_gamma_rhs(nu, 2, t.moment(3), t.moment(4), 0.0).unwrap().value.abs() < 1e-6);
    }
    let r = fm_gamma_rhs(1.0, 2, 0.0, 0.0, 8.0).unwrap();
    let (c1, c2) = gamma_constants(1.0).unwrap();
    assert!((r.value - (c1 * 36f64.sqrt() + c2 * 2.0)).abs() < 1e-12);
}

#[test]
fn ingredients_for_a_double_integral() {
    let f = chain_functional(6, 1.0).unwrap();
    let s = estimate_ingredients(&f, 20_000, 4).unwrap();
    let i = &s.ingredients;
    assert_eq!(i.q, Some(2));
    assert!(i.mean_gamma.z_score(i.m2.value) <= 3.0 || (i.mean_gamma.value - 1.0).abs() <= 3.0 * i.mean_gamma.se);
    assert!((i.grad_sq.value - 2.0 * i.m2.value).abs() <= 3.0 * (i.grad_sq.se + 2.0 * i.m2.se).max(1e-12));
    assert!(i.indicator.value >= 0.0);
    assert_eq!(s.values().len(), 20_000);
    let gb1 = s.rhs(BoundKind::Gb1).unwrap().0;
    let gb2 = s.rhs(BoundKind::Gb2).unwrap().0;
    assert!(gb1.value <= gb2.value + 3.0 * (gb1.se + gb2.se));
    for kind in BoundKind::ALL {
        let (rhs, _) = s.rhs(kind).unwrap();
        assert!(rhs.value >= 0.0 && rhs.se >= 0.0, "{}", kind.name());
    }
}

#[test]
fn single_order_bounds_need_a_single_integral() {
    let space = DiscreteSpace::uniform(3, 1.0).unwrap();
    let f = ChaosFunctional::integral(&space, SymKernel::from_fn(3, 1, |_| 0.4).unwrap())
        .unwrap()
        .with_kernel(SymKernel::from_fn(3, 2, |_| 0.2).unwrap())
        .unwrap();
    let s = estimate_ingredients(&f, 2_000, 1).unwrap();
    assert!(s.rhs(BoundKind::Fm).is_none());
    assert!(s.rhs(BoundKind::Gb1).is_some());
}

#[test]
fn reports_and_csv() {
    let f = chain_functional(5, 1.0).unwrap();
    let s = estimate_ingredients(&f, 5_000, 2).unwrap();
    let lhs = LhsDistances {
        w1: Some(Estimate { value: 0.01, se: 0.001 }),
        kolmogorov: None,
        d2: None,
    };
    let reports = s.reports(&lhs);
    let gb1 = reports.iter().find(|r| r.bound == "gb1").unwrap();
    assert_eq!(gb1.holds(), Some(true));
    let m = gb1.rhs.value - 0.01 - 3.0 * (0.001 + gb1.rhs.se);
    assert!((gb1.margin.unwrap() - m).abs() < 1e-12);
    assert!(reports.iter().filter(|r| r.bound == "k1").all(|r| r.margin.is_none()));
    let mut buf = Vec::new();
    write_bound_csv(&reports, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap().len(), 17);
    assert_eq!(rdr.records().filter(|r| r.is_ok()).count(), reports.len());
}

#[test]
fn lemma_suite_exact_q2() {
    let space = DiscreteSpace::new(vec![0.6, 1.2, 0.9, 1.5]).unwrap();
    let k = SymKernel::from_fn(4, 2, |i| ((i[0] * 5 + i[1] * 3) as f64).cos()).unwrap();
    let f = ChaosFunctional::integral(&space, k).unwrap();
    let r = lemma_suite(&f, Mode::Exact).unwrap();
    assert!(r.all_hold(), "{:#?}", r.checks);
    for name in ["remainder_identity", "cb1_equality", "vargamma2"] {
        let c = r.check(name).unwrap();
        assert!(c.diff.value.abs() <= 1e-9 * c.lhs.abs().max(1.0), "{name}");
    }
    assert!(r.check("sandwich_lower").is_some() && r.check("sandwich_upper").is_some());
}

#[test]
fn lemma_suite_first_order_coefficient() {
    let space = DiscreteSpace::new(vec![1.0, 2.0]).unwrap();
    let f = ChaosFunctional::integral(&space, SymKernel::from_fn(2, 1, |i| 1.0 + i[0] as f64).unwrap()).unwrap();
    let r = lemma_suite(&f, Mode::Exact).unwrap();
    let m4 = chaoskit::oracle::exact_moment(&f, 4).unwrap();
    let m2 = chaoskit::oracle::exact_moment(&f, 2).unwrap();
    let bound = r.check("cb1_bound").unwrap();
    assert!((bound.rhs - 0.25 * (m4 - 3.0 * m2 * m2)).abs() < 1e-9);
    assert!(r.all_hold());
}

#[test]
fn lemma_suite_rejects_mixed_orders() {
    let f = gamma_functional(2, 5.0, 1.0).unwrap();
    assert!(lemma_suite(&f, Mode::Exact).is_ok());
    let space = f.space().clone();
    let mixed = f.with_kernel(SymKernel::from_fn(2, 1, |_| 1.0).unwrap()).unwrap();
    assert!(lemma_suite(&mixed, Mode::Exact).is_err());
    assert!(lemma_suite(&ChaosFunctional::constant(&space, 1.0), Mode::Exact).is_err());
}
