use fuzzstoch::fuzzy::*;
use fuzzstoch::homog::{homogenize, rve_epsilon};
use fuzzstoch::microdata::{Provenance, SampleSet};
use fuzzstoch::randfield::{beta_from_moments, BetaParams, TranslationMap};
use fuzzstoch::solver::{qoi_direct, ProblemSpec};
use fuzzstoch::stats::{correlation_function, ecdf, pbox, Histogram};
use fuzzstoch::validate::{qoi_alpha_cdfs, FuzzyQoi, ValidateError};
use proptest::prelude::*;

fn triangle() -> impl Strategy<Value = FuzzyVariable> {
    (-5.0..5.0f64, 0.01..3.0f64, 0.01..3.0f64, 0.0..2.0f64).prop_map(|(peak, l, r, top)| {
        FuzzyVariable::trapezoidal(peak - l, peak, peak + top, peak + top + r).unwrap()
    })
}

fn alpha_pair() -> impl Strategy<Value = (f64, f64)> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
}

fn check_variable(v: &FuzzyVariable) {
    let knots = v.knots();
    assert!(knots.iter().all(|k| (0.0..=1.0).contains(&k.mu)));
    assert!(knots.iter().any(|k| k.mu == 1.0));
    let peak = knots.iter().position(|k| k.mu == 1.0).unwrap();
    assert!(knots[..=peak].windows(2).all(|w| w[1].mu >= w[0].mu));
    let last_top = knots.iter().rposition(|k| k.mu == 1.0).unwrap();
    assert!(knots[last_top..].windows(2).all(|w| w[1].mu <= w[0].mu));
    let s = v.support();
    assert!(s.lo.is_finite() && s.hi.is_finite() && s.lo <= s.hi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn alpha_cuts_nest(v in triangle(), (a1, a2) in alpha_pair()) {
        let (lo, hi) = (v.alpha_cut(a1), v.alpha_cut(a2));
        prop_assert!(lo.contains_interval(&hi));
        for a in [a1, a2] {
            let c = v.alpha_cut(a);
            if a > 0.0 {
                prop_assert!(v.membership(c.lo) >= a - 1e-12 && v.membership(c.hi) >= a - 1e-12);
            }
        }
    }

    #[test]
    fn joint_cuts_nest(u in triangle(), v in triangle(), beta in 0.05..2.0f64, shift in -2.0..2.0f64, stretch in 0.1..4.0f64, (a1, a2) in alpha_pair()) {
        // Segments nest when the components share one shape.
        let similar = FuzzyVariable::from_knots(
            u.knots().iter().map(|k| Knot { z: shift + stretch * k.z, mu: k.mu }).collect(),
        ).unwrap();
        for (interaction, w) in [
            (Interaction::NonInteractive, &v),
            (Interaction::CompletelyInteractive, &similar),
            (Interaction::PartiallyInteractive { beta: vec![beta] }, &v),
        ] {
            let vec = FuzzyVector::new(vec![u.clone(), w.clone()], interaction).unwrap();
            let (outer, inner) = (joint_alpha_cut(&vec, a1), joint_alpha_cut(&vec, a2));
            for z in inner.discretize(49) {
                prop_assert!(outer.contains(&z, 1e-9), "{z:?} not in {outer:?}");
            }
        }
    }

    #[test]
    fn fuzzified_histograms_are_valid(counts in prop::collection::vec(0usize..50, 2..15), lo in -3.0..3.0f64, w in 0.01..2.0f64) {
        prop_assume!(counts.iter().filter(|&&c| c > 0).count() >= 2);
        let edges = (0..=counts.len()).map(|k| lo + k as f64 * w).collect();
        let h = Histogram { edges, counts };
        let v = fuzzify_with_fallback(&h);
        check_variable(&v);
        if let Ok(v) = fuzzify_from_histogram(&h) {
            check_variable(&v);
        }
    }

    #[test]
    fn image_within_interval_arithmetic(
        a in prop::collection::vec(0.1..3.0f64, 4),
        u in triangle(),
        v in triangle(),
        op in 0usize..4,
        alpha in 0.0..=1.0f64,
    ) {
        // g1 and g2 increase in both arguments, so their ranges over a box
        // sit at its corners.
        let g1 = |z: &[f64]| a[0] * z[0] + a[1] * z[1].tanh();
        let g2 = |z: &[f64]| 4.0 + a[2] * z[0].tanh() + a[3] * z[1].tanh() * 0.1 + 7.0;
        let vec = FuzzyVector::new(vec![u, v], Interaction::NonInteractive).unwrap();
        let cut = joint_alpha_cut(&vec, alpha);
        let b = vec.cuts(alpha);
        let r1 = Interval::new(g1(&[b[0].lo, b[1].lo]), g1(&[b[0].hi, b[1].hi]));
        let r2 = Interval::new(g2(&[b[0].lo, b[1].lo]), g2(&[b[0].hi, b[1].hi]));
        let (image, arith) = match op {
            0 => (image_alpha_cut(|z| g1(z) + g2(z), &cut, 100), fuzzy_add(&r1, &r2)),
            1 => (image_alpha_cut(|z| g1(z) - g2(z), &cut, 100), fuzzy_sub(&r1, &r2)),
            2 => (image_alpha_cut(|z| g1(z) * g2(z), &cut, 100), fuzzy_mul(&r1, &r2)),
            _ => (image_alpha_cut(|z| g1(z) / g2(z), &cut, 100), fuzzy_div(&r1, &r2).unwrap()),
        };
        let tol = 1e-12 * (1.0 + arith.lo.abs().max(arith.hi.abs()));
        prop_assert!(arith.lo - tol <= image.lo && image.hi <= arith.hi + tol, "{image:?} vs {arith:?}");
    }

    #[test]
    fn difference_of_interactive_copies(v in triangle(), alpha in 0.0..=1.0f64) {
        let vec = FuzzyVector::new(vec![v.clone(), v.clone()], Interaction::CompletelyInteractive).unwrap();
        let image = image_alpha_cut(|z| z[0] - z[1], &joint_alpha_cut(&vec, alpha), 50);
        prop_assert_eq!((image.lo, image.hi), (0.0, 0.0));
        let c = v.alpha_cut(alpha);
        let arith = fuzzy_sub(&c, &c);
        prop_assert!((arith.lo + c.width()).abs() < 1e-12 && (arith.hi - c.width()).abs() < 1e-12);
    }

    #[test]
    fn beta_moment_round_trip(p in 0.3..30.0f64, q in 0.3..30.0f64, loc in 0.01..1.0f64, scale in 0.01..1.0f64) {
        let bp = BetaParams::new(p, q, loc, scale).unwrap();
        let [mu, sigma, g1, g2] = bp.moments();
        let fit = beta_from_moments(mu, sigma, g1, g2).unwrap();
        let [m2, s2, h1, h2] = fit.moments();
        prop_assert!((m2 - mu).abs() <= 1e-8 * mu.abs().max(1.0));
        prop_assert!((s2 - sigma).abs() <= 1e-8 * sigma);
        prop_assert!((h1 - g1).abs() <= 1e-8 * (1.0 + g1.abs()));
        prop_assert!((h2 - g2).abs() <= 1e-8 * (1.0 + g2.abs()));
    }

    #[test]
    fn translation_is_monotone(p in 0.3..30.0f64, q in 0.3..30.0f64, g in prop::collection::vec(-10.0..10.0f64, 2..40)) {
        let map = TranslationMap::new(BetaParams::new(p, q, 0.05, 0.2).unwrap());
        let mut g = g;
        g.sort_by(f64::total_cmp);
        let v: Vec<f64> = g.iter().map(|&x| map.eval(x)).collect();
        prop_assert!(v.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(v.iter().all(|&x| (0.05..=0.25).contains(&x)));
    }

    #[test]
    fn homogenization_is_linear_and_bounded(
        x in prop::collection::vec(0.05..0.3f64, 20..120),
        k in 1usize..15,
        a in 0.1..3.0f64,
        c in 0.1..3.0f64,
    ) {
        let h = 10.0;
        let w = (k.min(x.len())) as f64 * h;
        let y: Vec<f64> = x.iter().rev().copied().collect();
        let hx = homogenize(&x, h, w).unwrap();
        let hy = homogenize(&y, h, w).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + c * q).collect();
        let hm = homogenize(&mix, h, w).unwrap();
        let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
        for j in 0..x.len() {
            prop_assert!((hm[j] - (a * hx[j] + c * hy[j])).abs() <= 1e-12 * (a + c));
            prop_assert!(lo <= hx[j] && hx[j] <= hi);
        }
    }

    #[test]
    fn rve_scatter_is_scale_invariant(seed in 0u64..1000, k in 0.1..10.0f64) {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|m| (0..60).map(|j| 0.1 + 0.05 * (((seed + 7 * m + 13 * j) * 2654435761 % 1000) as f64 / 1000.0)).collect())
            .collect();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| k * v).collect()).collect();
        let s = SampleSet::from_rows(10.0, rows, Provenance::Bootstrap).unwrap();
        let t = SampleSet::from_rows(10.0, scaled, Provenance::Bootstrap).unwrap();
        for w in [10.0, 50.0, 200.0] {
            let (e1, e2) = (rve_epsilon(&s, w).unwrap(), rve_epsilon(&t, w).unwrap());
            prop_assert!((e1 - e2).abs() <= 1e-10 * e1.max(1e-300));
        }
    }

    #[test]
    fn direct_qoi_is_linear(b in prop::collection::vec(0.01..1.0f64, 101), a in 0.1..5.0f64) {
        let spec = ProblemSpec::default();
        let h = 1e4;
        let q = qoi_direct(&b, h, &spec).unwrap();
        let scaled: Vec<f64> = b.iter().map(|v| a * v).collect();
        prop_assert!((qoi_direct(&scaled, h, &spec).unwrap() - a * q).abs() <= 1e-12 * a * q);
    }

    #[test]
    fn correlation_is_bounded(x in prop::collection::vec(0.0..1.0f64, 5..80)) {
        prop_assume!(x.iter().any(|&v| (v - x[0]).abs() > 1e-6));
        let c = correlation_function(&x, 1.0, 40).unwrap();
        prop_assert!((c.c[0] - 1.0).abs() < 1e-12);
        prop_assert!(c.c.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn pbox_envelopes_members(groups in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 1..20), 1..6)) {
        let members: Vec<_> = groups.iter().map(|g| ecdf(g).unwrap()).collect();
        let p = pbox(members.clone()).unwrap();
        for m in &members {
            for &x in &p.lower.points {
                prop_assert!(p.contains(m, x));
            }
        }
    }
}

struct Affine;

impl FuzzyQoi for Affine {
    fn n_normals(&self) -> usize {
        4
    }

    fn evaluate(&self, y: &[f64], maps: &[Vec<TranslationMap>], out: &mut [Vec<f64>]) -> Result<(), ValidateError> {
        for (level, row) in maps.iter().zip(out.iter_mut()) {
            for (map, q) in level.iter().zip(row.iter_mut()) {
                *q = y.iter().enumerate().map(|(i, &g)| (i + 1) as f64 * map.eval(g)).sum();
            }
        }
        Ok(())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bands_are_ordered_and_nested(
        scales in prop::collection::vec(prop::collection::vec(0.01..0.3f64, 1..6), 1..4),
        seed in 0u64..1000,
    ) {
        let maps: Vec<Vec<TranslationMap>> = scales
            .iter()
            .map(|l| l.iter().map(|&s| TranslationMap::new(BetaParams::new(2.0, 5.0, 0.04, s).unwrap())).collect())
            .collect();
        let alphas: Vec<f64> = (0..maps.len()).map(|a| a as f64 / maps.len() as f64).collect();
        let band = qoi_alpha_cdfs(&Affine, &maps, &alphas, 64, seed).unwrap();
        for m in 0..64 {
            for a in 0..alphas.len() {
                prop_assert!(band.q_left[a][m] <= band.q_right[a][m]);
                if a > 0 {
                    prop_assert!(band.q_left[a - 1][m] <= band.q_left[a][m]);
                    prop_assert!(band.q_right[a][m] <= band.q_right[a - 1][m]);
                }
            }
        }
        for a in 0..alphas.len() {
            for &x in band.left[a].support() {
                prop_assert!(band.left[a].eval(x) >= band.right[a].eval(x));
            }
        }
        let again = qoi_alpha_cdfs(&Affine, &maps, &alphas, 64, seed).unwrap();
        prop_assert_eq!(band.to_csv(), again.to_csv());
    }
}
