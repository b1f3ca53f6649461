mod common;

use cojump_core::model::{dependent_partner_size, StableLikeTail};
use cojump_core::{InfiniteActivityJumpSpec, ThresholdRule};
use proptest::prelude::*;

proptest! {
    #[test]
    fn tail_and_inverse_are_inverse_bijections(
        c in 0.01f64..50.0,
        alpha in 0.01f64..1.99,
        log_x in -8.0f64..4.0,
    ) {
        let t = StableLikeTail::new(c, alpha).unwrap();
        let x = 10f64.powf(log_x);
        let u = t.tail_integral(x).unwrap();
        prop_assert!(u > 0.0);
        let back = t.inverse_tail(u).unwrap();
        prop_assert!((back / x - 1.0).abs() <= 1e-12, "x {x} -> u {u} -> {back}");
    }

    #[test]
    fn tail_is_strictly_decreasing(c in 0.01f64..50.0, alpha in 0.01f64..1.99, x in 1e-6f64..10.0) {
        let t = StableLikeTail::new(c, alpha).unwrap();
        prop_assert!(t.tail_integral(x * 1.001).unwrap() < t.tail_integral(x).unwrap());
    }

    #[test]
    fn moments_match_quadrature(
        c in 0.05f64..20.0,
        alpha in 0.02f64..1.98,
        log_eps in -5.0f64..-0.01,
        h in 1e-4f64..1.0,
    ) {
        let t = StableLikeTail::new(c, alpha).unwrap();
        let eps = 10f64.powf(log_eps);
        let q2 = common::quad_second_moment(c, alpha, eps);
        prop_assert!((t.truncated_second_moment(eps).unwrap() / q2 - 1.0).abs() < 1e-8);
        let q1 = h * common::quad_moment(c, alpha, 1.0, eps, 1.0);
        prop_assert!((t.compensator_mean(eps, h).unwrap() / q1 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn partner_size_strictly_increasing(
        c1 in 0.1f64..5.0, a1 in 0.05f64..1.95,
        c2 in 0.1f64..5.0, a2 in 0.05f64..1.95,
        x in 1e-4f64..1.0,
    ) {
        let s1 = InfiniteActivityJumpSpec::new(c1, a1).unwrap();
        let s2 = InfiniteActivityJumpSpec::new(c2, a2).unwrap();
        let y = dependent_partner_size(&s1, &s2, x).unwrap();
        let y_up = dependent_partner_size(&s1, &s2, x * 1.01).unwrap();
        prop_assert!(y_up > y);
    }

    #[test]
    fn partner_is_identity_for_equal_specs(c in 0.1f64..5.0, a in 0.05f64..1.95, x in 1e-4f64..1.0) {
        let s = InfiniteActivityJumpSpec::new(c, a).unwrap();
        let y = dependent_partner_size(&s, &s, x).unwrap();
        prop_assert!((y / x - 1.0).abs() < 1e-13);
    }

    #[test]
    fn threshold_ratios_eventually_decrease(c in 0.1f64..10.0, beta in 0.05f64..0.95) {
        let rule = ThresholdRule::new(c, beta).unwrap();
        // h log²(1/h)/r_h = h^{1-β} log²(1/h)/c decreases once (1-β) k ln 2 > 2
        let k0 = (2.0 / ((1.0 - beta) * std::f64::consts::LN_2)).ceil() as i32 + 1;
        let mut last = (f64::INFINITY, f64::INFINITY);
        for k in k0..k0 + 40 {
            let h = 2f64.powi(-k);
            let r = rule.admissibility_ratios(h);
            prop_assert!(r.0 < last.0 && r.1 < last.1, "k = {k}: {r:?} after {last:?}");
            last = r;
        }
    }
}

#[test]
fn domain_errors() {
    let t = StableLikeTail::new(1.0, 0.5).unwrap();
    assert!(t.tail_integral(0.0).is_err());
    assert!(t.tail_integral(-1.0).is_err());
    assert!(t.inverse_tail(0.0).is_err());
    assert!(t.truncated_second_moment(1.5).is_err());
    assert!(t.truncated_second_moment(0.0).is_err());
    assert!(t.compensator_mean(1.0, 0.1).is_err());
    assert!(StableLikeTail::new(1.0, 2.0).is_err());
    assert!(StableLikeTail::new(0.0, 1.0).is_err());
}
