mod common;

use common::*;
use dtd_core::patterns::{merge, MomentAccumulator, DEFAULT_DEGENERACY_THRESHOLD};
use dtd_core::{estimate_patterns, Activation, Dataset, DenseLayer, Mlp};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `(w′ᵀ X′X′ᵀ w′)⁻¹ w′ᵀ X′X′ᵀ` with `X′` the dense augmented data matrix.
fn closed_form_pattern(w_aug: &[f64], samples: &[Vec<f64>]) -> Vec<f64> {
    let d = w_aug.len();
    let mut x = DMatrix::<f64>::zeros(d, samples.len());
    for (n, s) in samples.iter().enumerate() {
        for (i, &v) in s.iter().enumerate() {
            x[(i, n)] = v;
        }
        x[(d - 1, n)] = 1.0;
    }
    let w = DVector::from_column_slice(w_aug);
    let moment = &x * x.transpose();
    let row = w.transpose() * &moment;
    let energy = (w.transpose() * &moment * &w)[(0, 0)];
    row.iter().map(|v| v / energy).collect()
}

fn accumulate(net: &Mlp, samples: &[Vec<f64>]) -> MomentAccumulator {
    let mut acc = MomentAccumulator::for_network(net);
    for s in samples {
        acc.accumulate(&net.forward_trace(s).unwrap()).unwrap();
    }
    acc
}

#[test]
fn streaming_matches_closed_form() {
    let mut r = rng(2024);
    for _ in 0..50 {
        let d = r.random_range(1..=5);
        let n = r.random_range(1..=20);
        let fan_out = r.random_range(1..=3);
        let weights = random_vec(&mut r, d * fan_out, -1.0, 1.0);
        let bias = random_vec(&mut r, fan_out, -0.5, 0.5);
        let layer = DenseLayer::new(weights, bias, d, Activation::Identity).unwrap();
        let net = Mlp::new(vec![layer]).unwrap();
        let samples: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut r, d, -1.0, 1.0)).collect();

        let set = accumulate(&net, &samples)
            .finalize(DEFAULT_DEGENERACY_THRESHOLD)
            .unwrap();
        let aug = net.layers()[0].augment_bias_as_input();
        for j in 0..fan_out {
            let oracle = closed_form_pattern(aug.row(j), &samples);
            let got = set.layers()[0].column(j);
            assert!(max_abs_diff(got, &oracle) <= 1e-10, "{got:?} vs {oracle:?}");
        }
    }
}

#[test]
fn accumulation_splits_merge_exactly() {
    let net = random_mlp(&[6, 5, 3], 9);
    let mut r = rng(1);
    let samples: Vec<Vec<f64>> = (0..30).map(|_| sparse_input(&mut r, 6, 0.2)).collect();
    let whole = accumulate(&net, &samples);
    for split in [0, 3, 10, 17, 30] {
        let merged = merge(
            &accumulate(&net, &samples[..split]),
            &accumulate(&net, &samples[split..]),
        )
        .unwrap();
        assert_eq!(merged.count(), whole.count());
        for l in 0..2 {
            for j in 0..net.layers()[l].fan_out() {
                assert!(max_abs_diff(merged.cross_moment(l, j), whole.cross_moment(l, j)) <= 1e-12);
                assert!((merged.z_sq(l, j) - whole.z_sq(l, j)).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn merge_commutes_and_associates() {
    let net = random_mlp(&[4, 3, 2], 2);
    let mut r = rng(8);
    let chunk = |r: &mut rand_chacha::ChaCha8Rng| -> MomentAccumulator {
        let samples: Vec<Vec<f64>> = (0..10).map(|_| random_vec(r, 4, -1.0, 1.0)).collect();
        accumulate(&net, &samples)
    };
    let (a, b, c) = (chunk(&mut r), chunk(&mut r), chunk(&mut r));
    let close = |x: &MomentAccumulator, y: &MomentAccumulator| {
        for l in 0..2 {
            for j in 0..net.layers()[l].fan_out() {
                assert!(max_abs_diff(x.cross_moment(l, j), y.cross_moment(l, j)) <= 1e-12);
                assert!((x.z_sq(l, j) - y.z_sq(l, j)).abs() <= 1e-12);
            }
        }
    };
    close(&merge(&a, &b).unwrap(), &merge(&b, &a).unwrap());
    close(
        &merge(&merge(&a, &b).unwrap(), &c).unwrap(),
        &merge(&a, &merge(&b, &c).unwrap()).unwrap(),
    );
}

#[test]
fn patterns_scale_with_inputs_when_outputs_are_held_fixed() {
    let mut r = rng(33);
    let w = random_vec(&mut r, 5, -1.0, 1.0);
    let samples: Vec<Vec<f64>> = (0..15).map(|_| random_vec(&mut r, 5, -1.0, 1.0)).collect();
    let single = |w: Vec<f64>| {
        Mlp::new(vec![
            DenseLayer::new(w, vec![0.0], 5, Activation::Identity).unwrap()
        ])
        .unwrap()
    };
    let base = accumulate(&single(w.clone()), &samples)
        .finalize(1e-12)
        .unwrap();

    for c in [0.5, 3.0, -2.0] {
        let scaled: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.iter().map(|v| c * v).collect())
            .collect();
        // Same filter: z scales with c, so the regression pattern is unchanged.
        let same = accumulate(&single(w.clone()), &scaled)
            .finalize(1e-12)
            .unwrap();
        assert!(
            max_abs_diff(
                &same.layers()[0].column(0)[..5],
                &base.layers()[0].column(0)[..5]
            ) <= 1e-10
        );
        // Filter rescaled by 1/c: z is unchanged and the pattern scales by c.
        let refit: Vec<f64> = w.iter().map(|v| v / c).collect();
        let covariant = accumulate(&single(refit), &scaled).finalize(1e-12).unwrap();
        let expected: Vec<f64> = base.layers()[0].column(0)[..5]
            .iter()
            .map(|v| c * v)
            .collect();
        assert!(max_abs_diff(&covariant.layers()[0].column(0)[..5], &expected) <= 1e-10);
    }
}

#[test]
fn identical_samples_give_rank_one_patterns() {
    let net = random_mlp(&[6, 4, 2], 5);
    let x0 = vec![0.3, 0.0, 0.9, 0.1, 0.6, 0.2];
    let data = Dataset::new(x0.repeat(12), 6, vec![0; 12]).unwrap();
    let set = estimate_patterns(&net, &data).unwrap();
    let mut x_aug = x0.clone();
    x_aug.push(1.0);
    let p = &set.layers()[0];
    for j in 0..4 {
        if p.is_degenerate(j) {
            continue;
        }
        let col = p.column(j);
        let ratio = col[6] / x_aug[6];
        for (a, x) in col.iter().zip(&x_aug) {
            assert!((a - ratio * x).abs() <= 1e-12);
        }
    }
}

#[test]
fn dataset_order_does_not_matter() {
    let net = random_mlp(&[8, 6, 3], 12);
    let mut r = rng(4);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| sparse_input(&mut r, 8, 0.3)).collect();
    let forward = Dataset::new(rows.concat(), 8, vec![0; 40]).unwrap();
    let reversed: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
    let backward = Dataset::new(reversed.concat(), 8, vec![0; 40]).unwrap();
    let a = estimate_patterns(&net, &forward).unwrap();
    let b = estimate_patterns(&net, &backward).unwrap();
    for (la, lb) in a.layers().iter().zip(b.layers()) {
        assert!(max_abs_diff(la.data(), lb.data()) <= 1e-12);
        assert_eq!(la.degenerate_flags(), lb.degenerate_flags());
    }
}

#[test]
fn empty_dataset_is_rejected() {
    let net = random_mlp(&[3, 2], 0);
    let empty = Dataset::new(vec![], 3, vec![]).unwrap();
    assert!(estimate_patterns(&net, &empty).is_err());
}
