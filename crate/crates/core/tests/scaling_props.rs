use neurocomm::scaling::*;
use proptest::prelude::*;

fn s_strategy() -> impl Strategy<Value = f64> {
    1e-9f64..0.999
}

proptest! {
    #[test]
    fn first_order_is_bounded(s in s_strategy(), n in 1u64..1_000_000) {
        let p = ScalingParams::first_order(s).unwrap();
        let x = speedup_first_order(&p, n as f64).unwrap();
        prop_assert!(x <= n as f64 * (1.0 + 1e-12));
        prop_assert!(x <= (1.0 / s) * (1.0 + 1e-12));
    }

    #[test]
    fn zero_overhead_orders_agree(s in s_strategy(), n in 1u64..1_000_000) {
        let p = ScalingParams::new(s, 0.0, 1.0).unwrap();
        let a = speedup_first_order(&p, n as f64).unwrap();
        let b = speedup_second_order(&p, n as f64).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn efficiency_decreases_with_cores(s in s_strategy(), c in 0.0f64..1e-3, n in 1u64..100_000) {
        let p = ScalingParams::new(s, c, 1.0).unwrap();
        let e1 = efficiency(&p, n as f64).unwrap();
        let e2 = efficiency(&p, (n + 1) as f64).unwrap();
        prop_assert!(e2 <= e1 * (1.0 + 1e-12));
    }

    #[test]
    fn payload_never_reaches_serial_bound(s in s_strategy(), c in 0.0f64..1e-3, perf in 0.1f64..1e3, n in 1u64..10_000_000) {
        let p = ScalingParams::new(s, c, perf).unwrap();
        prop_assert!(payload_performance(&p, n as f64).unwrap() < perf / s);
    }

    #[test]
    fn extrapolation_round_trips(
        h_share in 0.01f64..0.99,
        perf_a in 1.0f64..1e4,
        (width_a, width_b) in prop_oneof![Just((64u32, 32u32)), Just((64, 16)), Just((32, 16)), Just((64, 8))],
    ) {
        // forward model at equal operation count: time(w) = H + P * w / width_a
        let (h, payload) = (h_share, 1.0 - h_share);
        let time_b = h + payload * f64::from(width_b) / f64::from(width_a);
        let perf_b = perf_a / time_b;
        let x = mixed_precision_extrapolate(perf_a, width_a, perf_b, width_b).unwrap();
        prop_assert!((x.housekeeping_share - h_share).abs() < 1e-9);
        prop_assert!((x.fp0_performance - perf_a / h_share).abs() < 1e-9 * perf_a / h_share);
    }
}

#[test]
fn optimal_cores_matches_brute_force() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(42);
    for _ in 0..100 {
        let s: f64 = rng.gen_range(1e-6..0.5);
        // keep the brute-force scan below a million cores
        let c: f64 = 10f64.powf(rng.gen_range(-11.0..-1.0));
        let p = ScalingParams::new(s, c, 1.0).unwrap();
        let n_opt = optimal_cores(&p).unwrap();
        let limit = (((1.0 - s) / c).sqrt() as u64 * 2 + 4).min(1_000_000);
        let mut best = (1u64, speedup_second_order(&p, 1.0).unwrap());
        for n in 2..=limit {
            let v = speedup_second_order(&p, n as f64).unwrap();
            if v > best.1 {
                best = (n, v);
            }
        }
        if limit < 1_000_000 {
            assert_eq!(n_opt, best.0, "s={s} c={c}");
        } else {
            assert!(n_opt >= best.0);
        }
    }
}
