//! Randomized structural properties across modules.

use proptest::prelude::*;

use fundnet::network::{
    admissible_field, complete_monoid, network_to_json, parse_network_file, InputMap, NetworkSpec,
};
use fundnet::poly::PolyField;
use fundnet::random;
use fundnet::simulate::semiconjugacy_defect;
use fundnet::synchrony::{all_partitions, invariance_oracle, is_robust};

/// Distinct non-identity maps on `n` cells, picked from raw target vectors.
fn spec_from(n: usize, raw: &[Vec<usize>]) -> Option<NetworkSpec> {
    let mut maps: Vec<InputMap> = Vec::new();
    for t in raw {
        let t: Vec<usize> = t.iter().map(|v| v % n).collect();
        let m = InputMap::new(format!("s{}", maps.len() + 2), t);
        if m.is_identity() || maps.iter().any(|q| q.target == m.target) {
            continue;
        }
        maps.push(m);
    }
    if maps.is_empty() {
        return None;
    }
    NetworkSpec::new(n, 1, maps).ok()
}

fn network() -> impl Strategy<Value = NetworkSpec> {
    (2usize..=4, prop::collection::vec(prop::collection::vec(0usize..4, 4), 1..=3)).prop_filter_map(
        "needs a non-identity map",
        |(n, raw)| {
            let raw: Vec<Vec<usize>> = raw.into_iter().map(|mut t| {
                t.truncate(n);
                t
            }).collect();
            spec_from(n, &raw)
        },
    )
}

fn scalar(f: &PolyField) -> fundnet::poly::Poly {
    f.component(0).clone()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn truncated_products_are_associative_and_distributive(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let a = scalar(&random::random_field(&mut rng, 3, 1, 0, 3));
        let b = scalar(&random::random_field(&mut rng, 3, 1, 0, 3));
        let c = scalar(&random::random_field(&mut rng, 3, 1, 0, 3));
        let left = a.mul(&b, 3).mul(&c, 3);
        let right = a.mul(&b.mul(&c, 3), 3);
        prop_assert!(left.sub(&right).max_abs() <= 1e-12);
        let spread = a.mul(&b.add(&c), 3).sub(&a.mul(&b, 3).add(&a.mul(&c, 3)));
        prop_assert!(spread.max_abs() <= 1e-12);
    }

    #[test]
    fn composition_is_associative(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let f = random::random_field(&mut rng, 2, 2, 1, 2);
        let g = random::random_field(&mut rng, 2, 2, 1, 2);
        let h = random::random_field(&mut rng, 2, 2, 1, 2);
        let left = f.compose(&g, 2).unwrap().compose(&h, 2).unwrap();
        let right = f.compose(&g.compose(&h, 2).unwrap(), 2).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-12);
    }

    #[test]
    fn completion_is_a_closed_monoid(spec in network()) {
        let m = complete_monoid(&spec);
        prop_assert!(m.check_laws());
        for map in &spec.maps {
            prop_assert!(m.index_of(&map.target).is_some());
        }
        prop_assert!(m.elements[m.unit_index].is_identity());
    }

    #[test]
    fn balanced_partitions_are_exactly_the_invariant_ones(spec in network(), seed in any::<u64>()) {
        for p in all_partitions(spec.cells) {
            prop_assert_eq!(is_robust(&p, &spec), invariance_oracle(&p, &spec, 20, seed), "partition {}", p);
        }
    }

    #[test]
    fn file_format_round_trips(spec in network(), seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let f = random::random_response(&mut rng, spec.slots(), 1, 2);
        let text = network_to_json(&spec, Some(&f), Some("roundtrip"));
        let back = parse_network_file(&text).unwrap();
        prop_assert_eq!(&back.spec, &spec);
        let g = back.response.unwrap();
        prop_assert_eq!(g.poly.max_abs_diff(&f.poly).unwrap(), 0.0);
        let a = admissible_field(&spec, &f).unwrap();
        let b = admissible_field(&back.spec, &g).unwrap();
        prop_assert_eq!(a.max_abs_diff(&b).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn cell_projections_semiconjugate_the_flows(spec in network(), seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let mut f = random::random_response(&mut rng, spec.slots(), 1, 2).poly.scale(0.2);
        f.component_mut(0).add_term(fundnet::poly::Monomial::var(spec.slots() + 1, 0), -4.0);
        let f = fundnet::network::ResponseFunction::new(f, spec.slots(), 1).unwrap();
        let x0 = random::uniform_vec(&mut rng, spec.cells, 0.1);
        for p in 0..spec.cells {
            let d = semiconjugacy_defect(&spec, &f, p, &x0, 0.1, 2.0, 0.01).unwrap();
            prop_assert!(d <= 1e-10, "cell {} defect {:e}", p, d);
        }
    }
}
