use geocons_core::training::{
    add_noise, extend_projections, lambda_depth, toy_forward, toy_forward_extended, v_target, z0_from_v, LossWeights,
    Matrix, NoiseSchedule, ProjectionWeights,
};
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn ramp_is_monotone_and_bounded(a in 0u64..100_000, b in 0u64..100_000, alpha in 1e-6f64..1e-2) {
        let w = LossWeights { alpha_ramp: alpha, ..LossWeights::default() };
        let (lo, hi) = (a.min(b), a.max(b));
        let (x, y) = (lambda_depth(lo, &w), lambda_depth(hi, &w));
        prop_assert!(x <= y);
        prop_assert!((0.1..=1.0).contains(&x) && (0.1..=1.0).contains(&y));
    }

    #[test]
    fn v_round_trip(z0 in vec(-5.0f64..5.0, 1..32), seed in 0u64..1000, t in 1usize..=200) {
        let sched = NoiseSchedule::linear(200).unwrap();
        let eps: Vec<f64> = z0.iter().enumerate().map(|(i, z)| ((seed + i as u64) as f64).sin() * 2.0 - z * 0.1).collect();
        let zt = add_noise(&z0, &eps, t, &sched).unwrap();
        let v = v_target(&z0, &eps, t, &sched).unwrap();
        let back = z0_from_v(&zt, &v, t, &sched).unwrap();
        for (a, b) in back.iter().zip(&z0) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn extension_has_zero_influence(
        cv in 1usize..6,
        ct in 1usize..6,
        data in vec(-3.0f64..3.0, 2 * 36 + 12 + 12),
    ) {
        let take = |from: usize, n: usize| data[from..from + n].to_vec();
        let w = ProjectionWeights::new(
            Matrix::from_vec(cv, ct, take(0, cv * ct)).unwrap(),
            take(36, ct),
            Matrix::from_vec(ct, cv, take(42, ct * cv)).unwrap(),
            take(78, cv),
        ).unwrap();
        let ext = extend_projections(&w);
        let z = take(84, 2 * cv);
        let base = toy_forward(&w, &z[..cv]).unwrap();
        let out = toy_forward_extended(&ext, &z).unwrap();
        prop_assert_eq!(&out[..cv], &base[..]);
        prop_assert_eq!(&out[cv..], &out[..cv]);
    }
}

#[test]
fn schedules_reject_bad_input() {
    assert!(NoiseSchedule::from_alphas(&[]).is_err());
    assert!(NoiseSchedule::from_alphas(&[0.9, 0.0]).is_err());
    assert!(NoiseSchedule::from_alpha_bars(&[0.5, 0.6]).is_err());
    let s = NoiseSchedule::linear(10).unwrap();
    assert!(add_noise(&[1.0], &[0.0], 0, &s).is_err());
    assert!(add_noise(&[1.0], &[0.0], 11, &s).is_err());
    assert!(add_noise(&[1.0, 2.0], &[0.0], 1, &s).is_err());
}
