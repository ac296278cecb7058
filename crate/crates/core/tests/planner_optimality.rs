//! A* against an exact-arithmetic Dijkstra (petgraph) on random grids.

mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::grid_reference::{compare_on_random_grids, sign3};

#[test]
fn exact_sign_agrees_with_floats() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10_000 {
        let (x, y, z) = (rng.random_range(-500..500i128), rng.random_range(-500..500i128), rng.random_range(-500..500i128));
        let f = x as f64 + y as f64 * 2f64.sqrt() + z as f64 * 3f64.sqrt();
        if f.abs() > 1e-6 {
            assert_eq!(sign3(x, y, z), f.signum() as i128, "{x} {y} {z}");
        }
    }
    assert_eq!(sign3(0, 0, 0), 0);
}

#[test]
fn astar_matches_dijkstra_on_random_grids() {
    let c = compare_on_random_grids(2024, 100);
    assert!(c.mismatches.is_empty(), "{:#?}", c.mismatches);
    assert!(c.reachable >= 50, "only {} reachable instances", c.reachable);
}
