use gwrw_core::offspring::*;
use proptest::prelude::*;

fn supercritical_law() -> impl Strategy<Value = OffspringLaw> {
    prop::collection::vec(0.01f64..1.0, 2..6)
        .prop_flat_map(|w| (Just(w), 0.05f64..0.6))
        .prop_filter_map("supercritical", |(w, p0)| {
            let rest: f64 = w.iter().sum();
            let mut probs = vec![p0];
            probs.extend(w.iter().map(|x| x / rest * (1.0 - p0)));
            OffspringLaw::new(probs).ok().filter(|l| l.mean() > 1.05)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extinction_is_the_smallest_fixed_point(law in supercritical_law()) {
        let q = extinction_probability(&law);
        prop_assert!(q > 0.0 && q < 1.0);
        prop_assert!((law.pgf(q) - q).abs() < 1e-12);
        let mut s = 0.0;
        for _ in 0..20_000 {
            s = law.pgf(s);
        }
        prop_assert!((s - q).abs() < 1e-9);
    }

    #[test]
    fn derived_laws_are_consistent(law in supercritical_law()) {
        let q = extinction_probability(&law);
        let h = h_law(&law, q);
        let fprime = law.pgf_derivative(q);
        prop_assert!((h.mean() - fprime).abs() < 1e-10);
        prop_assert!(h.mean() < 1.0);
        let g = g_law(&law, q);
        prop_assert_eq!(g.p(0), 0.0);
        prop_assert!((g.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 1..=law.max_degree() {
            if g.p(j) > 0.0 {
                let b = backbone_bud_law(&law, q, j).unwrap();
                prop_assert!((b.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn height_tail_is_monotone_and_geometric(law in supercritical_law()) {
        let q = extinction_probability(&law);
        let h = h_law(&law, q);
        let t = height_tail(&h, 200);
        prop_assert_eq!(t.values[0], 1.0);
        for n in 0..200 {
            prop_assert!(t.values[n + 1] <= t.values[n]);
        }
        let target = 1.0 / h.mean();
        let c = geiger_cn(&t, 120);
        prop_assert!((c - target).abs() < 1e-3 * target, "c = {c}, 1/f'(q) = {target}");
    }

    #[test]
    fn gamma_in_unit_interval(law in supercritical_law(), excess in 0.01f64..20.0) {
        let q = extinction_probability(&law);
        let fprime = law.pgf_derivative(q);
        let beta = 1.0 / fprime + excess;
        if beta > 1.0 {
            let g = gamma_exponent(fprime, beta).unwrap();
            prop_assert!(g > 0.0 && g < 1.0);
        }
    }
}
