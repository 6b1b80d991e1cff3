use num_bigint::BigUint;
use num_traits::ToPrimitive;
use proptest::prelude::*;

use conewalk::bm::bm_survival;
use conewalk::conditioned::{pointmass_dp, pointmass_reversed, survival_dp, survival_exact, survival_series};
use conewalk::cone::Cone;
use conewalk::counting::count_paths;
use conewalk::dp::Radius;
use conewalk::special::SeriesControl;
use conewalk::stats::{fn_bound, FnForm, FnParams};
use conewalk::walk::StepDistribution;

fn srw() -> StepDistribution {
    StepDistribution::from_multiset(&[vec![1], vec![-1]]).unwrap()
}

fn lazy_nsew() -> StepDistribution {
    let steps = [[0, 0], [0, 0], [0, 0], [0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]];
    StepDistribution::from_multiset(&steps.map(|s| s.to_vec())).unwrap()
}

fn binom(n: u64, k: i64) -> BigUint {
    if k < 0 || k as u64 > n {
        return BigUint::from(0u32);
    }
    let k = k as u64;
    (0..k).fold(BigUint::from(1u32), |acc, i| acc * BigUint::from(n - i) / BigUint::from(i + 1))
}

/// Simple-walk paths a -> b in n steps that avoid 0, by the reflection principle.
fn ballot(a: i64, b: i64, n: u64) -> BigUint {
    if (n as i64 + b - a) % 2 != 0 {
        return BigUint::from(0u32);
    }
    let up = (n as i64 + b - a) / 2;
    let up_reflected = (n as i64 + b + a) / 2;
    let all = binom(n, up);
    let bad = binom(n, up_reflected);
    if all > bad {
        all - bad
    } else {
        BigUint::from(0u32)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cones_are_scale_invariant(x in prop::collection::vec(-5.0f64..5.0, 3), lambda in 0.01f64..100.0) {
        for cone in [Cone::orthant(3).unwrap(), Cone::weyl_a(3).unwrap(), Cone::weyl_c(3).unwrap()] {
            let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
            prop_assert_eq!(cone.contains(&x).unwrap(), cone.contains(&scaled).unwrap());
        }
        let wedge = Cone::wedge(2.0).unwrap();
        let scaled = [x[0] * lambda, x[1] * lambda];
        prop_assert_eq!(wedge.contains(&x[..2]).unwrap(), wedge.contains(&scaled).unwrap());
    }

    #[test]
    fn bm_survival_is_a_decreasing_probability(a in 0.05f64..3.0, b in 0.05f64..3.0, t in 0.1f64..10.0) {
        let ctl = SeriesControl::default();
        let quadrant = Cone::orthant(2).unwrap();
        let p = bm_survival(&quadrant, &[a, b], t, &ctl).unwrap();
        let later = bm_survival(&quadrant, &[a, b], 2.0 * t, &ctl).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(later <= p);
        // A quadrant start survives at most as well as either half-plane.
        let half = bm_survival(&Cone::half_line(), &[a.min(b)], t, &ctl).unwrap();
        prop_assert!(p <= half + 1e-15);
    }

    #[test]
    fn wedge_series_scales_diffusively(r in 0.1f64..0.6, theta in 0.1f64..0.9, t in 0.5f64..2.0, c in 0.5f64..2.0) {
        // P_x(tau > t) = P_{cx}(tau > c^2 t) for Brownian motion in a cone.
        let alpha = 1.0;
        let wedge = Cone::wedge(alpha).unwrap();
        let x = [r * (theta * alpha).cos(), r * (theta * alpha).sin()];
        let cx = [c * x[0], c * x[1]];
        let ctl = SeriesControl::default();
        let p = bm_survival(&wedge, &x, t, &ctl).unwrap();
        let q = bm_survival(&wedge, &cx, c * c * t, &ctl).unwrap();
        prop_assert!((p - q).abs() < 1e-10, "{} vs {}", p, q);
    }

    #[test]
    fn simple_walk_counts_match_the_ballot_formula(a in 1i64..6, b in 1i64..6, n in 0usize..40) {
        let got = count_paths(&[vec![1], vec![-1]], &Cone::half_line(), &[a], &[b], n).unwrap();
        prop_assert_eq!(got, ballot(a, b, n as u64));
    }

    #[test]
    fn truncated_bracket_encloses_exact_survival(x in 1i64..5, n in 1usize..60, radius in 2i64..12) {
        let dist = srw();
        let exact = survival_exact(&Cone::half_line(), &dist, &[x], n).unwrap().to_f64().unwrap();
        let b = survival_dp(&Cone::half_line(), &dist, &[x], n, Radius::Explicit(radius.max(x + 1))).unwrap();
        prop_assert!(b.lower <= exact + 1e-12 && exact <= b.upper + 1e-12, "{:?} vs {}", b, exact);
    }

    #[test]
    fn survival_is_nonincreasing_in_n(x in 1i64..4, y in 1i64..4) {
        let checkpoints: Vec<usize> = (0..=40).collect();
        let series = survival_series(&Cone::orthant(2).unwrap(), &lazy_nsew(), &[x, y], &checkpoints, Radius::Full).unwrap();
        for w in series.windows(2) {
            prop_assert!(w[1].1.value() <= w[0].1.value() + 1e-15);
        }
    }

    #[test]
    fn symmetric_walk_point_masses_are_time_reversible(x in 1i64..4, y in 1i64..4, u in 1i64..4, v in 1i64..4, n in 1usize..30) {
        let cone = Cone::orthant(2).unwrap();
        let dist = lazy_nsew();
        let forward = pointmass_dp(&cone, &dist, &[x, y], &[u, v], n, Radius::Full).unwrap().value();
        let backward = pointmass_reversed(&cone, &dist, &[x, y], &[u, v], n, Radius::Full).unwrap().value();
        let swapped = pointmass_dp(&cone, &dist, &[u, v], &[x, y], n, Radius::Full).unwrap().value();
        prop_assert!((forward - backward).abs() <= 1e-14);
        prop_assert!((forward - swapped).abs() <= 1e-14);
    }

    #[test]
    fn fuk_nagaev_bound_decreases_in_x_at_fixed_truncation_ratio(n in 1u64..10_000, x in 1.0f64..200.0, frac in 0.05f64..1.0, dim in 1usize..4) {
        let params = |x_level: f64| FnParams {
            n,
            x_level,
            y_level: frac * x_level,
            variance: 1.0,
            tail_prob_at_y: 0.0,
            dim,
        };
        let near = fn_bound(&params(x), FnForm::NF4).unwrap();
        let far = fn_bound(&params(2.0 * x), FnForm::NF4).unwrap();
        prop_assert!(far <= near + 1e-15);
        let truncated = fn_bound(&params(x), FnForm::NF3).unwrap();
        prop_assert!(near >= truncated - 1e-15);
    }
}

#[test]
fn nsew_two_step_survival_is_three_eighths() {
    // Of the 16 two-step paths from (1,1), the first step stays inside with
    // probability 1/2 and then each of those survives with 3/4.
    let dist = StepDistribution::from_multiset(&[vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]]).unwrap();
    let q = survival_exact(&Cone::orthant(2).unwrap(), &dist, &[1, 1], 2).unwrap();
    assert_eq!(q.to_f64().unwrap(), 0.375);
}
