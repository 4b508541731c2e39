use hlgrowth::schedule::{schedule_gap, tilde_schedule, CapacitySchedule, ScheduleParams};
use proptest::prelude::*;

const REL: f64 = 1e-12;

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(1.0), Just(1.5), 0.05f64..1.95]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefix_sums_are_monotone(alpha in alpha(), c in 1e-3f64..0.1, n in 2usize..20_000) {
        let s = CapacitySchedule::new(ScheduleParams::new(alpha, c, n).unwrap()).unwrap();
        for k in 1..n {
            prop_assert!(s.c_star(k + 1) < s.c_star(k));
            prop_assert!(s.c_star_sum(1, k + 1).unwrap() > s.c_star_sum(1, k).unwrap());
        }
    }

    #[test]
    fn gap_ratio_and_kappa_bounds(alpha in alpha(), c in 1e-3f64..0.1, n in 2usize..50_000) {
        let p = ScheduleParams::new(alpha, c, n).unwrap();
        let s = CapacitySchedule::new(p).unwrap();
        let t = tilde_schedule(p).unwrap();
        // c~_n / c*_n = (1 + alpha c (n-1)) e^{-alpha C~_{1,n-1}} >= e^{-eps_{1,n-1} log(1 + alpha c (n-1))} >= e^{-alpha c}
        let ratio_cap = (alpha * (alpha + 6.0) * c).exp();
        for m in 1..=n {
            let gap = schedule_gap(&s, &t, m).unwrap();
            prop_assert!(gap >= -REL * s.c_star_sum(1, m).unwrap() && gap <= 6.0 * c);
            let ratio = t.c_tilde(m) / s.c_star(m);
            prop_assert!(
                ratio >= (-alpha * c).exp() * (1.0 - REL) && ratio <= ratio_cap * (1.0 + REL),
                "m={m} ratio={ratio} cap={ratio_cap}"
            );
            if m >= 2 {
                let kappa = s.kappa_defect(m).unwrap();
                prop_assert!(kappa >= -REL * c && kappa <= s.kappa_bound(m) * (1.0 + REL));
            }
        }
    }

    #[test]
    fn epsilon_and_power_bound(
        alpha in alpha(),
        c in 1e-3f64..0.1,
        (k, n) in (1usize..1_000_000).prop_flat_map(|n| (1..=n, Just(n))),
    ) {
        let s = CapacitySchedule::new(ScheduleParams::new(alpha, c, n).unwrap()).unwrap();
        let eps = s.epsilon_kn(k, n).unwrap();
        prop_assert!(eps > 0.0 && eps <= s.epsilon_bound(n) * (1.0 + REL), "eps={eps}");
        let (lhs, rhs) = s.power_bound_sides(k, n).unwrap();
        prop_assert!(lhs <= rhs + REL * rhs.abs());
    }
}

#[test]
fn constant_capacity_has_no_gap() {
    let p = ScheduleParams::new(0.0, 0.05, 1000).unwrap();
    let s = CapacitySchedule::new(p).unwrap();
    let t = tilde_schedule(p).unwrap();
    assert_eq!(schedule_gap(&s, &t, 1000).unwrap(), 0.0);
    assert_eq!(s.c_star_sum(1, 1000).unwrap(), 1000.0 * 0.05);
    assert!(s.epsilon_kn(1, 10).is_err());
}

#[test]
fn degenerate_epsilon_is_rejected() {
    let s = CapacitySchedule::new(ScheduleParams::new(1.0, 0.01, 10).unwrap()).unwrap();
    assert!(s.epsilon_kn(11, 10).is_err());
    assert!(s.epsilon_kn(10, 10).unwrap() > 0.0);
}
