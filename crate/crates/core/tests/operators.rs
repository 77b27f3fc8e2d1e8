use proptest::prelude::*;

use atlas_stefan::heat::smooth;
use atlas_stefan::mass_profile::{d_star, precede_mod, Grid, MassProfile, PointMeasure, TailModel};

fn grid() -> Grid {
    Grid::new(-2.0, 3.0, 0.01).unwrap()
}

/// Nondecreasing profile from a few slopes, zero left of `start`.
fn profile(start: f64, slopes: &[f64]) -> MassProfile {
    let g = grid();
    let width = (g.x_hi - start) / slopes.len() as f64;
    let f = |x: f64| {
        let mut acc = 0.0;
        for (k, s) in slopes.iter().enumerate() {
            let a = start + k as f64 * width;
            acc += s * (x - a).clamp(0.0, width);
        }
        acc
    };
    let last = *slopes.last().unwrap();
    MassProfile::from_fn(g, TailModel::Linear { intercept: f(g.x_hi) - last * g.x_hi, slope: last }, f).unwrap()
}

fn arb_profile() -> impl Strategy<Value = MassProfile> {
    (-0.5f64..0.5, prop::collection::vec(0.0f64..4.0, 1..6), 0.5f64..4.0).prop_map(|(s, mut sl, last)| {
        sl.push(last);
        profile(s, &sl)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cuts_compose(v in arb_profile(), a in 0.01f64..0.3, b in 0.01f64..0.3) {
        let m = v.grid_mass();
        let (a, b) = (a * m, b * m);
        let once = v.cut(a + b).unwrap();
        let twice = v.cut(a).unwrap().cut(b).unwrap();
        let tol = 1e-9 * (1.0 + m);
        prop_assert!((once.grid_mass() - (m - a - b)).abs() < tol);
        prop_assert!(precede_mod(&once, &twice, 0.0, Some(tol)).unwrap().holds);
        prop_assert!(precede_mod(&twice, &once, 0.0, Some(tol)).unwrap().holds);
    }

    #[test]
    fn cut_is_below_the_original(v in arb_profile(), a in 0.01f64..0.5) {
        let c = v.cut(a * v.grid_mass()).unwrap();
        prop_assert!(c.values().iter().zip(v.values()).all(|(x, y)| *x <= *y + 1e-12));
        prop_assert!(c.values().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn order_is_reflexive_and_slack_monotone(v in arb_profile(), ell in 0.0f64..0.2) {
        prop_assert!(precede_mod(&v, &v, 0.0, Some(1e-12)).unwrap().holds);
        let c = v.cut(0.1 * v.grid_mass()).unwrap();
        // a cut has less mass to the left of every point
        prop_assert!(precede_mod(&v, &c, ell, Some(1e-9)).unwrap().holds);
    }

    #[test]
    fn smoothing_keeps_monotone_profiles_monotone(v in arb_profile(), t in 1e-4f64..1e-2) {
        let s = smooth(&v, t).unwrap();
        let g = s.grid();
        let pad = 8.0 * t.sqrt();
        for (i, w) in s.values().windows(2).enumerate() {
            if g.node(i) > g.x_lo + pad && g.node(i + 1) < g.x_hi - pad {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
        }
    }

    #[test]
    fn flat_distance_is_symmetric(xs in prop::collection::vec(0.0f64..2.5, 1..40), ys in prop::collection::vec(0.0f64..2.5, 1..40)) {
        let g = grid();
        let a = PointMeasure::new(xs, 0.05).unwrap();
        let b = PointMeasure::new(ys, 0.05).unwrap();
        let ab = d_star(&g, &a, &b, 2).unwrap().value;
        let ba = d_star(&g, &b, &a, 2).unwrap().value;
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(d_star(&g, &a, &a, 2).unwrap().value.abs() < 1e-12);
    }
}
