mod common;

use flowcoop::flow::{softmax, MotionDescriptor};
use flowcoop::gp::{GpModel, SeKernel};
use flowcoop::harness::{resample, rms_error};
use flowcoop::planner::{barrier_value, BarrierParams};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn points(n: usize, d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, n * d).prop_map(move |v| DMatrix::from_row_slice(n, d, &v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn descriptor_is_on_simplex(d in prop::collection::vec(0.0..50.0f64, 1..8)) {
        let p = MotionDescriptor::from_distances(&d).p;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn descriptor_commutes_with_permutation(d in prop::collection::vec(0.0..5.0f64, 2..8), rot in 0usize..8) {
        let p = MotionDescriptor::from_distances(&d).p;
        let mut shifted = d.clone();
        let r = rot % d.len();
        shifted.rotate_left(r);
        let mut q = p.clone();
        q.rotate_left(r);
        let got = MotionDescriptor::from_distances(&shifted).p;
        for (a, b) in got.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn descriptor_favors_nearer_flows(d in prop::collection::vec(0.0..3.0f64, 2..6)) {
        let p = MotionDescriptor::from_distances(&d).p;
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] < d[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution(l in prop::collection::vec(-700.0..700.0f64, 1..30)) {
        let w = softmax(&l);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn gp_variance_shrinks_with_more_data(x in points(6, 2), q in points(1, 2)) {
        let kernel = SeKernel::new(1.3, 0.8, 1e-3).unwrap();
        let y = DMatrix::zeros(6, 1);
        let query: Vec<f64> = q.row(0).iter().copied().collect();
        let mut prev = kernel.gain;
        for n in 1..=6 {
            let gp = GpModel::fit(x.rows(0, n).into_owned(), y.rows(0, n).into_owned(), kernel.clone()).unwrap();
            let v = gp.predict(&query).unwrap().var;
            prop_assert!(v <= prev + 1e-12);
            prop_assert!(v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn gp_fit_is_deterministic(x in points(5, 3), y in points(5, 2), q in points(3, 3)) {
        let kernel = SeKernel::new(1.0, 0.5, 1e-2).unwrap();
        let a = GpModel::fit(x.clone(), y.clone(), kernel.clone()).unwrap().predict_rows(&q).unwrap();
        let b = GpModel::fit(x, y, kernel).unwrap().predict_rows(&q).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn barrier_decreases_with_clearance(a in -500.0..2000.0f64, b in -500.0..2000.0f64) {
        let p = BarrierParams::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(barrier_value(lo, &p) >= barrier_value(hi, &p));
    }

    #[test]
    fn rms_is_a_symmetric_metric(a in points(12, 3), b in points(12, 3)) {
        let ab = rms_error(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - rms_error(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(rms_error(&a, &a).unwrap() == 0.0);
    }

    #[test]
    fn resample_keeps_endpoints(a in points(9, 2), n in 2usize..40) {
        let r = resample(&a, n);
        prop_assert_eq!(r.nrows(), n);
        for j in 0..2 {
            prop_assert!((r[(0, j)] - a[(0, j)]).abs() < 1e-12);
            prop_assert!((r[(n - 1, j)] - a[(8, j)]).abs() < 1e-12);
        }
    }
}
