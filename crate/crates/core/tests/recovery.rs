use l1stab::ampdist::AmplitudeDistribution;
use l1stab::harness::{is_exact_recovery, plain_success_rate, random_instance, trial_seed};
use l1stab::recovery::{l1_recover, overlap_bound, reweighted_recover};
use l1stab::stability::estimate_weak_threshold;

#[test]
fn ten_sparse_in_dimension_hundred_is_recovered() {
    let dist = AmplitudeDistribution::half_normal();
    let mut hits = 0;
    for t in 0..100 {
        let inst = random_instance(100, 50, 10, &dist, trial_seed(77, 0, t)).unwrap();
        let r = l1_recover(&inst.a, &inst.y).unwrap();
        hits += usize::from(is_exact_recovery(&r.z, &inst.x.to_dense()));
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn overlap_bound_holds_on_failures_too() {
    let dist = AmplitudeDistribution::half_normal();
    for t in 0..20 {
        let inst = random_instance(60, 30, 15, &dist, trial_seed(5, 1, t)).unwrap();
        let r = l1_recover(&inst.a, &inst.y).unwrap();
        let (lhs, rhs) = overlap_bound(&inst.x, &r.z).unwrap();
        assert!(lhs >= rhs, "trial {t}: {lhs} < {rhs}");
    }
}

#[test]
fn reweighting_never_hurts_an_exact_first_step() {
    let dist = AmplitudeDistribution::half_normal();
    for t in 0..10 {
        let inst = random_instance(60, 30, 5, &dist, trial_seed(9, 2, t)).unwrap();
        let o = reweighted_recover(&inst.a, &inst.y, 5, 3.0).unwrap();
        let x = inst.x.to_dense();
        if is_exact_recovery(&o.x_hat, &x) {
            assert!(is_exact_recovery(&o.x_star, &x));
        }
    }
}

#[test]
fn success_rate_falls_with_sparsity() {
    let dist = AmplitudeDistribution::half_normal();
    let lo = plain_success_rate(60, 30, 3, 20, 1, &dist).unwrap();
    let hi = plain_success_rate(60, 30, 20, 20, 1, &dist).unwrap();
    assert!(lo >= hi);
    assert_eq!(lo, 1.0);
}

#[test]
fn weak_threshold_grows_with_measurements() {
    let a = estimate_weak_threshold(0.3, 60, 20, 4, 0.5).unwrap();
    let b = estimate_weak_threshold(0.7, 60, 20, 4, 0.5).unwrap();
    assert!(a < b, "{a} vs {b}");
    assert_eq!(estimate_weak_threshold(1.0, 40, 5, 4, 0.5).unwrap(), 1.0);
}
