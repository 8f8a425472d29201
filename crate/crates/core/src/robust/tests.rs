use super::*;
use proptest::prelude::*;
use std::vec::Vec;

fn grid_min(d: &[f64], eps: f64, points: usize) -> f64 {
    // direct evaluation of λε + λ ln mean exp(−d/λ) on a log-λ grid
    let (lo, hi) = (libm::log(1e-2), libm::log(1e4));
    (0..points)
        .map(|k| {
            let lambda = libm::exp(lo + (hi - lo) * k as f64 / (points - 1) as f64);
            let m = d.iter().map(|x| libm::exp(-x / lambda)).sum::<f64>() / d.len() as f64;
            lambda * eps + lambda * libm::log(m)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn two_point_matches_grid_search() {
    let r = dual_min(&[1.0, 2.0], 0.05).unwrap();
    assert_eq!(r.boundary, DualBoundary::Interior);
    assert!((r.robust_value + grid_min(&[1.0, 2.0], 0.05, 1_000_000)).abs() < 1e-6);
}

#[test]
fn constant_values_bind_at_zero() {
    let r = dual_min(&[0.7; 5], 0.3).unwrap();
    assert_eq!((r.robust_value, r.lambda_star, r.boundary), (0.7, 0.0, DualBoundary::LambdaZero));
    assert_eq!(r.extreme_multiplicity, 5);
    assert_eq!(dual_max(&[0.7; 5], 0.3).unwrap().robust_value, 0.7);
}

#[test]
fn epsilon_zero_is_the_mean() {
    let d = [0.3, 1.1, -0.4, 2.5];
    let r = dual_min(&d, 0.0).unwrap();
    assert_eq!(r.robust_value, crate::numeric::mean(&d));
    assert!(r.subgradient.iter().all(|g| *g == -0.25));
    assert_eq!(dual_max(&d, 0.0).unwrap().robust_value, r.robust_value);
}

#[test]
fn large_radius_gives_extremes() {
    let d = [1.0, 2.0];
    let r = dual_min(&d, libm::log(2.0)).unwrap();
    assert_eq!(r.robust_value, 1.0);
    assert_eq!(r.subgradient, vec![-1.0, 0.0]);
    assert_eq!(dual_max(&d, 5.0).unwrap().robust_value, 2.0);
    // ties: threshold is ln(N/m)
    let tied = [1.0, 1.0, 3.0, 4.0];
    assert_eq!(dual_min(&tied, libm::log(2.0)).unwrap().boundary, DualBoundary::LambdaZero);
    assert_eq!(dual_min(&tied, libm::log(2.0) - 1e-3).unwrap().boundary, DualBoundary::Interior);
}

#[test]
fn weighted_reduces_to_unweighted() {
    let d = [0.2, 0.9, 1.7];
    let a = dual_min(&d, 0.1).unwrap();
    let b = dual_min_weighted(&d, Some(&[2.0, 2.0, 2.0]), 0.1).unwrap();
    assert!((a.robust_value - b.robust_value).abs() < 1e-12);
    // duplicating an entry is the same as doubling its weight
    let c = dual_min(&[0.2, 0.9, 0.9, 1.7], 0.1).unwrap();
    let e = dual_min_weighted(&d, Some(&[1.0, 2.0, 1.0]), 0.1).unwrap();
    assert!((c.robust_value - e.robust_value).abs() < 1e-10);
}

#[test]
fn rejects_bad_input() {
    assert!(dual_min(&[], 0.1).is_err());
    assert!(dual_min(&[1.0, f64::NAN], 0.1).is_err());
    assert!(dual_min(&[1.0], -0.1).is_err());
    assert!(dual_min_weighted(&[1.0, 2.0], Some(&[1.0]), 0.1).is_err());
}

#[test]
fn subgradient_matches_finite_differences() {
    let d = [0.4, 1.3, 0.9, 2.2, 1.0];
    let eps = 0.07;
    let r = dual_min(&d, eps).unwrap();
    assert_eq!(r.boundary, DualBoundary::Interior);
    let h = 1e-5;
    for i in 0..d.len() {
        let mut up = d;
        up[i] += h;
        let mut dn = d;
        dn[i] -= h;
        let fd = (dual_min(&up, eps).unwrap().value - dual_min(&dn, eps).unwrap().value) / (2.0 * h);
        assert!((fd - r.subgradient[i]).abs() <= 1e-5 * r.subgradient[i].abs(), "{i}: {fd} vs {}", r.subgradient[i]);
    }
}

#[test]
fn design_gradient_chain_rule() {
    let d = [0.0, 1.0];
    let r = dual_min(&d, 0.0).unwrap();
    let g = design_gradient(&r, &[vec![1.0, 0.0], vec![3.0, 2.0]]).unwrap();
    assert_eq!(g, vec![2.0, 1.0]);
    assert!(design_gradient(&r, &[vec![1.0]]).is_err());
}

#[test]
fn robust_mode_round_trips() {
    for m in RobustMode::ALL {
        assert_eq!(m.as_str().parse::<RobustMode>().unwrap(), m);
    }
    assert!("minimax".parse::<RobustMode>().is_err());
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 2..40)
}

proptest! {
    #[test]
    fn range_and_sum(d in values(), eps in 0.0f64..3.0) {
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let r = dual_min(&d, eps).unwrap();
        prop_assert!(r.robust_value >= lo - 1e-12 && r.robust_value <= mean + 1e-12);
        prop_assert!((r.subgradient.iter().sum::<f64>() + 1.0).abs() < 1e-12);
        prop_assert!(r.subgradient.iter().all(|g| *g <= 0.0));
        let x = dual_max(&d, eps).unwrap();
        prop_assert!(x.robust_value <= hi + 1e-12 && x.robust_value >= mean - 1e-12);
        prop_assert!((x.subgradient.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_and_homogeneity(d in values(), eps in 0.0f64..3.0, c in -10.0f64..10.0, a in 0.1f64..10.0) {
        let r = dual_min(&d, eps).unwrap().robust_value;
        let shifted: Vec<f64> = d.iter().map(|x| x + c).collect();
        let scaled: Vec<f64> = d.iter().map(|x| x * a).collect();
        prop_assert!((dual_min(&shifted, eps).unwrap().robust_value - (r + c)).abs() < 1e-9);
        prop_assert!((dual_min(&scaled, eps).unwrap().robust_value - a * r).abs() < 1e-9 * (1.0 + a * r.abs()));
    }

    #[test]
    fn monotone_in_radius(d in values(), e1 in 0.0f64..2.0, e2 in 0.0f64..2.0) {
        let (small, large) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(dual_min(&d, large).unwrap().robust_value <= dual_min(&d, small).unwrap().robust_value + 1e-12);
        prop_assert!(dual_max(&d, large).unwrap().robust_value >= dual_max(&d, small).unwrap().robust_value - 1e-12);
    }

    #[test]
    fn squeeze_bounds(d in values(), eps in 0.0f64..2.0, lambda in 1e-3f64..10.0) {
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let n = d.len() as f64;
        let m = d.iter().map(|x| libm::exp(-x / lambda)).sum::<f64>() / n;
        let g = lambda * eps + lambda * libm::log(m);
        prop_assert!(lambda * eps - lo >= g - 1e-9);
        prop_assert!(g > lambda * eps - lo - lambda * libm::log(n) - 1e-9);
    }

    #[test]
    fn solver_is_not_beaten_by_grid(d in prop::collection::vec(-2.0f64..2.0, 2..8), eps in 0.01f64..0.6) {
        let r = dual_min(&d, eps).unwrap();
        prop_assert!(r.value <= grid_min(&d, eps, 2000) + 1e-9);
    }
}

#[test]
fn radius_ln_n_is_exactly_the_minimum() {
    for n in 2..300usize {
        let d: Vec<f64> = (0..n).map(|i| libm::sin(i as f64 * 1.7) + 0.01 * i as f64).collect();
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        for eps in [libm::log(n as f64), (n as f64).ln()] {
            let r = dual_min(&d, eps).unwrap();
            assert_eq!((r.robust_value, r.boundary), (min, DualBoundary::LambdaZero), "n = {n}");
        }
    }
}
