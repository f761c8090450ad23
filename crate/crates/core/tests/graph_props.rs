use netference::graph::{
    exposure, neighborhood_covariates, Aggregator, CovariateFrame, ExposureKind, ExposureSpec, IsolatedPolicy, Network,
};
use proptest::prelude::*;

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (3usize..40).prop_flat_map(|n| {
        let pair = (0..n, 0..n).prop_filter("no self loops", |(i, j)| i != j);
        (Just(n), prop::collection::vec(pair, 0..120))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn adjacency_is_symmetric_sorted_and_counted((n, edges) in graph_strategy()) {
        let net = Network::from_edges(n, &edges, None).unwrap();
        let mut deg_sum = 0;
        for i in 0..n {
            let nb = net.neighbors(i);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            for &j in nb {
                prop_assert!(net.is_neighbor(j, i));
            }
            deg_sum += net.degree(i);
        }
        prop_assert_eq!(deg_sum, 2 * net.num_edges());
        prop_assert_eq!(net.edges().len(), net.num_edges());
        // Rebuilding from the canonical edge list is the identity.
        prop_assert_eq!(Network::from_edges(n, &net.edges(), None).unwrap(), net);
    }

    #[test]
    fn neighbor_means_lie_between_neighbor_extremes(
        (n, edges) in graph_strategy(),
        x in prop::collection::vec(-10.0f64..10.0, 40),
    ) {
        let net = Network::from_edges(n, &edges, None).unwrap();
        let mut cov = CovariateFrame::new(n);
        cov.add_individual("x", x[..n].to_vec()).unwrap();
        let out = neighborhood_covariates(&net, &cov, &[("x", Aggregator::Mean), ("x", Aggregator::Degree)]).unwrap();
        let m = out.values("friends.x").unwrap();
        let d = out.values("degree").unwrap();
        for i in 0..n {
            prop_assert_eq!(d[i], net.degree(i) as f64);
            let nb = net.neighbors(i);
            if nb.is_empty() {
                continue;
            }
            let lo = nb.iter().map(|&j| x[j]).fold(f64::INFINITY, f64::min);
            let hi = nb.iter().map(|&j| x[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m[i] >= lo - 1e-12 && m[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn exposures_are_admissible_and_bounded(
        (n, edges) in graph_strategy(),
        z in prop::collection::vec(0u8..2, 40),
        k in 1usize..6,
    ) {
        let net = Network::from_edges(n, &edges, None).unwrap();
        let z = &z[..n];
        let top = exposure(&net, z, &ExposureSpec::top_k(k)).unwrap();
        let count = exposure(&net, z, &ExposureSpec::count_all().with_isolated(IsolatedPolicy::TreatAsZero)).unwrap();
        for i in 0..n {
            let deg = net.degree(i);
            prop_assert_eq!(top.trials[i] as usize, k.min(deg));
            prop_assert_eq!(top.defined[i], deg > 0);
            prop_assert!((0.0..=1.0).contains(&top.values[i]));
            let kind = ExposureKind::ProportionTopK { k };
            prop_assert!(kind.successes(top.values[i], top.trials[i]).is_some());
            let treated = net.neighbors(i).iter().filter(|&&j| z[j] == 1).count();
            prop_assert_eq!(count.values[i], treated as f64);
            prop_assert!(count.defined[i]);
            // Top-k exposure can never count more treated than exist.
            prop_assert!(top.values[i] * top.trials[i] as f64 <= treated as f64 + 1e-9);
        }
    }

    #[test]
    fn flipping_a_treatment_moves_only_its_neighbors((n, edges) in graph_strategy(), z in prop::collection::vec(0u8..2, 40), who in 0usize..40) {
        let net = Network::from_edges(n, &edges, None).unwrap();
        let mut z = z[..n].to_vec();
        let who = who % n;
        let spec = ExposureSpec::count_all();
        let before = exposure(&net, &z, &spec).unwrap();
        z[who] ^= 1;
        let after = exposure(&net, &z, &spec).unwrap();
        for i in 0..n {
            let moved = (after.values[i] - before.values[i]).abs();
            if net.is_neighbor(i, who) {
                prop_assert_eq!(moved, 1.0);
            } else {
                prop_assert_eq!(moved, 0.0);
            }
        }
    }
}
