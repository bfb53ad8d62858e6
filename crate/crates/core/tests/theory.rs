use knng::theory::{
    combined_lower_bound, euclidean_collision_prob, multi_tree_prob, new_discovery_prob,
    path_propagation_prob, propagation_prob, simulate_discovery, simulate_euclidean_collision,
    Discovery, TreeModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Closed form of the Gaussian-projection bucket collision probability.
fn collision_closed_form(d: f64, w: f64) -> f64 {
    let r = w / d;
    let phi = Normal::new(0.0, 1.0).unwrap();
    1.0 - 2.0 * phi.cdf(-r)
        - 2.0 / ((2.0 * std::f64::consts::PI).sqrt() * r) * (1.0 - (-r * r / 2.0).exp())
}

#[test]
fn quadrature_matches_the_closed_form() {
    for d in [0.1, 0.5, 1.0, 2.0, 7.5] {
        for w in [0.05, 0.5, 1.0, 2.0, 4.0, 20.0] {
            let q = euclidean_collision_prob(d, w).unwrap();
            let c = collision_closed_form(d, w);
            assert!((q - c).abs() < 1e-7, "d={d} w={w}: {q} vs {c}");
        }
    }
}

#[test]
fn wide_buckets_collide_more_often_than_not() {
    for d in [0.5, 1.0, 2.0] {
        for factor in [2.0, 3.0, 10.0] {
            assert!(euclidean_collision_prob(d, factor * d).unwrap() > 0.5);
        }
    }
}

#[test]
fn hash_simulator_agrees_with_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let est = simulate_euclidean_collision(1.0, 2.0, 8, 1_000_000, &mut rng);
    assert!(est.agrees_with(euclidean_collision_prob(1.0, 2.0).unwrap(), 3.0));
}

#[test]
fn any_tree_frequency_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = TreeModel { p: 0.7, h: 3, l: 5 };
    let est = simulate_discovery(&model, &Discovery::AnyTree, 100_000, &mut rng).unwrap();
    assert!(est.agrees_with(multi_tree_prob(0.7, 3, 5), 3.0));
}

#[test]
fn first_discovery_frequencies_decrease() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut last = f64::INFINITY;
    for l in 1..=10 {
        let model = TreeModel { p: 0.8, h: 4, l };
        let est = simulate_discovery(&model, &Discovery::NewAtLast, 100_000, &mut rng).unwrap();
        assert!(est.agrees_with(new_discovery_prob(0.8, 4, l), 3.0));
        assert!(est.freq < last + 3.0 * est.std_err, "l={l}");
        last = est.freq;
    }
}

#[test]
fn two_hop_path_matches_coupled_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = TreeModel { p: 0.85, h: 3, l: 4 };
    let hops = vec![0.85, 0.85, 0.85];
    let formula = path_propagation_prob(&hops, 3, 4).unwrap();
    let est = simulate_discovery(&model, &Discovery::ThroughPath { hops }, 100_000, &mut rng).unwrap();
    assert!(est.agrees_with(formula, 3.0), "{est:?} vs {formula}");
    let common = propagation_prob(0.85, 0.85, 3, 4);
    let est = simulate_discovery(
        &model,
        &Discovery::ThroughCommon { p_in: 0.85, p_jn: 0.85 },
        100_000,
        &mut rng,
    )
    .unwrap();
    assert!(est.agrees_with(common, 3.0));
}

#[test]
fn combined_bound_is_a_lower_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in [0.6, 0.8, 0.9] {
        for h in [2, 4] {
            for l in [1, 3, 5] {
                let model = TreeModel { p, h, l };
                let event = Discovery::TreesOrPropagation { p_in: p, p_jn: p };
                let est = simulate_discovery(&model, &event, 100_000, &mut rng).unwrap();
                let bound = combined_lower_bound(p, h, l);
                assert!(est.freq >= bound - 3.0 * est.std_err, "p={p} h={h} l={l}");
            }
        }
    }
}
