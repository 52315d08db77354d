use l1stab::harness::{gaussian_matrix, splitmix64};
use l1stab::recovery::{l1_recover, SparseSignal};
use l1stab::stability::{
    condition_margin, kappa_exact, kappa_sample, scaling_constant, stability_factor, MARGIN_TOL,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

#[test]
fn nonnegative_margin_implies_the_tail_bound() {
    let c = scaling_constant(0.5).unwrap();
    let factor = stability_factor(c).unwrap();
    let mut checked = 0;
    for seed in 0..30u64 {
        let a = gaussian_matrix(10, 20, splitmix64(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = SparseSignal::new(20, vec![0, 1], vec![1.0, -1.0]).unwrap();
        if condition_margin(&a, &head, c).unwrap() < MARGIN_TOL {
            continue;
        }
        let mut x = head.to_dense();
        for v in x.iter_mut().skip(2) {
            *v = 1e-3 * rng.random_range(-1.0..1.0);
        }
        let y: Vec<f64> = (&a * DVector::from_column_slice(&x))
            .iter()
            .copied()
            .collect();
        let r = l1_recover(&a, &y).unwrap();
        let err_tail: Vec<f64> = (2..20).map(|i| x[i] - r.z[i]).collect();
        assert!(l1(&err_tail) <= factor * l1(&x[2..]) + 1e-6, "seed {seed}");
        checked += 1;
    }
    assert!(checked > 5);
}

#[test]
fn sampled_kappa_never_exceeds_the_exact_value() {
    let a = gaussian_matrix(6, 10, 4).unwrap();
    let s = [0, 3, 5];
    let exact = kappa_exact(&a, &s).unwrap();
    let sampled = kappa_sample(&a, &s, 500, 1).unwrap();
    assert!(sampled <= exact * (1.0 + 1e-9), "{sampled} > {exact}");
}

proptest! {
    #[test]
    fn scaling_identity(v in 0.0f64..0.999) {
        let c = scaling_constant(v).unwrap();
        prop_assert!((c * c * (1.0 - v) - 1.0).abs() <= 1e-12);
        prop_assert!(stability_factor(c).map_or(c <= 1.0, |f| f > 2.0));
    }
}
