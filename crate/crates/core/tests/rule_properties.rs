use oplrp_core::kernels;
use oplrp_core::rules::*;
use oplrp_core::Tensor;
use proptest::prelude::*;

fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn triple() -> impl Strategy<Value = (Tensor, Tensor, Tensor)> {
    (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(b, i, o)| (mat(b, i), mat(i, o), mat(b, o)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gamma_zero_is_epsilon((x, w, r) in triple()) {
        let z = kernels::matmul(&x, &w).unwrap();
        let e = epsilon_rule(&x, &w, &z, &r, 1e-6).unwrap();
        let g = gamma_rule(&x, &w, &r, 0.0, 1e-6).unwrap();
        prop_assert!(e.max_abs_diff(&g).unwrap() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn epsilon_rule_conserves_up_to_eps((x, w, r) in triple()) {
        let z = kernels::matmul(&x, &w).unwrap();
        prop_assume!(z.data().iter().all(|v| v.abs() > 1e-3));
        let eps = 1e-9;
        let rin = epsilon_rule(&x, &w, &z, &r, eps).unwrap();
        let kappa = z.numel() as f64;
        let scale: f64 = r.data().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((rin.sum() - r.sum()).abs() <= eps * kappa * scale * 1e3 + 1e-12);
    }

    #[test]
    fn bilinear_identity_splits_in_half(n in 1usize..6, p in 1usize..5, seed in prop::collection::vec(0.1f64..2.0, 30)) {
        let eye = Tensor::matrix(n, n, (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
        let v = Tensor::matrix(n, p, (0..n * p).map(|k| seed[k % seed.len()] * if k % 3 == 0 { -1.0 } else { 1.0 }).collect()).unwrap();
        let o = kernels::matmul(&eye, &v).unwrap();
        let r = o.map(|x| 0.5 * x + 0.25);
        let (ra, rv) = bilinear_rule(&eye, &v, &o, &r, 0.0).unwrap();
        prop_assert!((ra.sum() - r.sum() / 2.0).abs() <= 1e-12);
        prop_assert!((ra.sum() + rv.sum() - r.sum()).abs() <= 1e-12);
    }

    #[test]
    fn abs_ratio_conserves_exactly(a in mat(3, 4), b in mat(3, 4), r in mat(3, 4)) {
        let out = abs_ratio_rule(&[&a, &b], &r).unwrap();
        let total = out[0].sum() + out[1].sum();
        prop_assert!((total - r.sum()).abs() <= 1e-12);
        prop_assert_eq!(out[0].shape(), a.shape());
    }

    #[test]
    fn abs_ratio_with_broadcast_operand(a in mat(3, 4), b in mat(1, 4), r in mat(3, 4)) {
        let out = abs_ratio_rule(&[&a, &b], &r).unwrap();
        prop_assert_eq!(out[1].shape(), b.shape());
        prop_assert!((out[0].sum() + out[1].sum() - r.sum()).abs() <= 1e-12);
    }

    #[test]
    fn maxpool_routing_is_exact(r in prop::collection::vec(-2.0f64..2.0, 4), picks in prop::collection::vec(0usize..16, 4)) {
        let r = Tensor::new(vec![1, 1, 2, 2], r).unwrap();
        let routed = maxpool_route(&picks, &r, &[1, 1, 4, 4]).unwrap();
        prop_assert!((routed.sum() - r.sum()).abs() <= 1e-12);
    }
}

#[test]
fn softmax_rule_matches_formula() {
    let x = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.0, 1.0, -0.5]).unwrap();
    let s = kernels::softmax_forward(&x, 1).unwrap();
    let r = Tensor::matrix(2, 3, vec![1.0, 0.0, 2.0, -1.0, 0.5, 0.5]).unwrap();
    let out = softmax_rule(&x, &s, &r, 1).unwrap();
    for row in 0..2 {
        let total: f64 = (0..3).map(|k| r.data()[row * 3 + k]).sum();
        for k in 0..3 {
            let j = row * 3 + k;
            let expect = x.data()[j] * (r.data()[j] - s.data()[j] * total);
            assert_eq!(out.data()[j], expect);
        }
    }
}

#[test]
fn single_entry_softmax_row_gives_nothing() {
    let x = Tensor::matrix(3, 1, vec![0.7, -2.0, 4.0]).unwrap();
    let s = kernels::softmax_forward(&x, 1).unwrap();
    let out = softmax_rule(&x, &s, &x, 1).unwrap();
    assert!(out.data().iter().all(|v| v.abs() <= 1e-15));
}
