use chaoskit::kernels::{multiset_count, Layout};
use chaoskit::{DiscreteSpace, SymKernel, Tensor};
use proptest::prelude::*;

#[test]
fn symmetrize_off_diagonal_indicator() {
    let mut t = Tensor::zeros(2, 2).unwrap();
    t.set(&[0, 1], 1.0).unwrap();
    let s = t.symmetrize().unwrap();
    assert_eq!(s.get(&[0, 1]).unwrap(), 0.5);
    assert_eq!(s.get(&[1, 0]).unwrap(), 0.5);
    assert_eq!(s.get(&[0, 0]).unwrap(), 0.0);
}

#[test]
fn inner_product_single_cell() {
    let space = DiscreteSpace::new(vec![2.0]).unwrap();
    let f = SymKernel::from_fn(1, 1, |_| 3.0).unwrap();
    assert_eq!(f.inner(&f, &space).unwrap(), 18.0);
    assert_eq!(f.norm_sq(&space).unwrap(), 18.0);
}

#[test]
fn symmetric_storage_matches_dense_inner() {
    let space = DiscreteSpace::new(vec![0.5, 1.5, 2.0]).unwrap();
    let f = SymKernel::from_fn(3, 3, |i| (i[0] + 2 * i[1] * i[2]) as f64 - 1.0).unwrap();
    let g = SymKernel::from_fn(3, 3, |i| (i.iter().sum::<usize>() as f64).sin()).unwrap();
    let dense = f.to_tensor().unwrap().inner(&g.to_tensor().unwrap(), &space).unwrap();
    assert!((f.inner(&g, &space).unwrap() - dense).abs() < 1e-12);
}

#[test]
fn layout_sizes() {
    assert_eq!(multiset_count(4, 2), 10);
    assert_eq!(multiset_count(3, 3), 10);
    let l = Layout::get(4, 3).unwrap();
    assert_eq!(l.len(), 20);
    let total: f64 = (0..l.len()).map(|r| l.arrangements(r)).sum();
    assert_eq!(total, 64.0);
}

#[test]
fn json_round_trip_and_errors() {
    let k = SymKernel::from_json(r#"{"order": 2, "entries": [{"idx": [0, 1], "val": 1.0}]}"#, 3).unwrap();
    assert_eq!(k.get(&[1, 0]).unwrap(), 0.5);
    let back = SymKernel::from_json(&k.to_json_value().to_string(), 3).unwrap();
    assert_eq!(back, k);
    let sym = SymKernel::from_json(r#"{"order": 2, "symmetric": true, "entries": [{"idx": [0, 1], "val": 1.0}]}"#, 3).unwrap();
    assert_eq!(sym.get(&[1, 0]).unwrap(), 1.0);
    assert!(SymKernel::from_json(r#"{"order": 2, "entries": [{"idx": [0], "val": 1.0}]}"#, 3).is_err());
    assert!(SymKernel::from_json(r#"{"order": 1, "entries": [{"idx": [5], "val": 1.0}]}"#, 3).is_err());
    assert!(SymKernel::from_json(r#"{"order": 1, "cells": 2, "entries": []}"#, 3).is_err());
}

#[test]
fn order_mismatch_is_rejected() {
    let space = DiscreteSpace::uniform(2, 1.0).unwrap();
    let a = SymKernel::zeros(2, 1).unwrap();
    let b = SymKernel::zeros(2, 2).unwrap();
    assert!(a.inner(&b, &space).is_err());
    assert!(a.combine(1.0, &b, 1.0).is_err());
}

proptest! {
    #[test]
    fn symmetrize_is_idempotent(vals in proptest::collection::vec(-5.0f64..5.0, 27)) {
        let t = Tensor::from_fn(3, 3, |i| vals[i[0] * 9 + i[1] * 3 + i[2]]).unwrap();
        let s = t.symmetrize().unwrap();
        let s2 = s.to_tensor().unwrap().symmetrize().unwrap();
        prop_assert!(s.max_abs_diff(&s2).unwrap() < 1e-12);
        let space = DiscreteSpace::uniform(3, 1.3).unwrap();
        // symmetrization is an orthogonal projection
        prop_assert!(s.norm_sq(&space).unwrap() <= t.norm_sq(&space).unwrap() + 1e-9);
    }

    #[test]
    fn sym_tensor_product_is_symmetrized_product(a in proptest::collection::vec(-2.0f64..2.0, 3), b in proptest::collection::vec(-2.0f64..2.0, 6)) {
        let f = SymKernel::from_fn(3, 1, |i| a[i[0]]).unwrap();
        let mut g = SymKernel::zeros(3, 2).unwrap();
        for (v, slot) in b.iter().zip(0..) {
            let ms = g.layout().multiset(slot).to_vec();
            g.set(&ms, *v).unwrap();
        }
        let direct = f.tensor_product(&g).unwrap().symmetrize().unwrap();
        prop_assert!(f.sym_tensor_product(&g).unwrap().max_abs_diff(&direct).unwrap() < 1e-12);
    }
}
