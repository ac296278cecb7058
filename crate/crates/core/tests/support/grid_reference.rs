//! Exact-arithmetic Dijkstra (petgraph) over the 26-connected traversable
//! voxels, for checking A* optimality.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::ops::Add;

use camshot_core::plan::{astar, distance_transform, step_counts, traversable, VoxelGrid};
use nalgebra::Vector3;
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `a + b√2 + c√3` with integer coefficients. 1, √2 and √3 are linearly
/// independent over the rationals, so equal lengths have equal coefficients
/// and the order below is exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Len(pub [i64; 3]);

impl Add for Len {
    type Output = Len;
    fn add(self, o: Len) -> Len {
        Len([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

/// Sign of `x + y√k` for integers (k not a square).
pub fn sign2(x: i128, y: i128, k: i128) -> i128 {
    let (sx, sy) = (x.signum(), y.signum());
    if sx == sy || sy == 0 {
        return sx;
    }
    if sx == 0 {
        return sy;
    }
    if x * x > k * y * y {
        sx
    } else {
        sy
    }
}

/// Sign of `x + y√2 + z√3`.
pub fn sign3(x: i128, y: i128, z: i128) -> i128 {
    let s1 = sign2(x, y, 2);
    let s2 = z.signum();
    if s1 == s2 || s2 == 0 {
        return s1;
    }
    if s1 == 0 {
        return s2;
    }
    // compare (x + y√2)² = x² + 2y² + 2xy√2 against 3z²
    if sign2(x * x + 2 * y * y - 3 * z * z, 2 * x * y, 2) > 0 {
        s1
    } else {
        s2
    }
}

impl PartialOrd for Len {
    fn partial_cmp(&self, o: &Len) -> Option<Ordering> {
        let d = |i: usize| (self.0[i] - o.0[i]) as i128;
        Some(sign3(d(0), d(1), d(2)).cmp(&0))
    }
}

/// Outcome of comparing A* with the exact reference on random grids.
#[derive(Debug, Default)]
pub struct Comparison {
    pub trials: usize,
    pub reachable: usize,
    pub mismatches: Vec<String>,
}

/// `trials` random 16³ grids (res 0.1, density 0.1..0.35), random free
/// endpoints; every fourth trial uses a one-voxel clearance.
pub fn compare_on_random_grids(seed: u64, trials: usize) -> Comparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Comparison {
        trials,
        ..Comparison::default()
    };
    for trial in 0..trials {
        let res = 0.1;
        let density = rng.random_range(0.1..0.35);
        let occ: Vec<bool> = (0..16 * 16 * 16).map(|_| rng.random_bool(density)).collect();
        let grid = VoxelGrid::from_occupancy(Vector3::zeros(), res, [16, 16, 16], occ).unwrap();
        let field = distance_transform(&grid);
        let clearance = if trial % 4 == 3 { res } else { 0.0 };

        let mut g = UnGraph::<usize, Len>::new_undirected();
        let nodes: Vec<Option<NodeIndex>> = (0..grid.len())
            .map(|i| traversable(&field, i, clearance).then(|| g.add_node(i)))
            .collect();
        for i in 0..grid.len() {
            let Some(a) = nodes[i] else { continue };
            let [x, y, z] = grid.voxel(i);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (u, v, w) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                        if !(0..16).contains(&u) || !(0..16).contains(&v) || !(0..16).contains(&w) {
                            continue;
                        }
                        let j = grid.index([u as usize, v as usize, w as usize]);
                        if j <= i {
                            continue;
                        }
                        if let Some(b) = nodes[j] {
                            let class = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                            let mut c = [0; 3];
                            c[class - 1] = 1;
                            g.add_edge(a, b, Len(c));
                        }
                    }
                }
            }
        }

        let free: Vec<usize> = (0..grid.len()).filter(|&i| nodes[i].is_some()).collect();
        if free.len() < 2 {
            continue;
        }
        let s = free[rng.random_range(0..free.len())];
        let t = free[rng.random_range(0..free.len())];
        let dist = dijkstra(&g, nodes[s].unwrap(), nodes[t], |e| *e.weight());
        let ps = grid.center(grid.voxel(s));
        let pt = grid.center(grid.voxel(t));
        match (astar(&field, &ps, &pt, clearance), dist.get(&nodes[t].unwrap())) {
            (Ok(path), Some(best)) => {
                out.reachable += 1;
                let counts = step_counts(&path.voxels);
                let got = [counts[0] as i64, counts[1] as i64, counts[2] as i64];
                if got != best.0 {
                    out.mismatches
                        .push(format!("trial {trial}: A* steps {got:?}, Dijkstra {:?}", best.0));
                }
                let valid = path.voxels.windows(2).all(|w| {
                    (0..3).all(|a| w[0][a].abs_diff(w[1][a]) <= 1) && traversable(&field, grid.index(w[1]), clearance)
                });
                if !valid {
                    out.mismatches.push(format!("trial {trial}: A* path has an invalid step"));
                }
            }
            (Err(_), None) => {}
            (a, b) => out.mismatches.push(format!(
                "trial {trial}: reachability disagrees: astar {:?}, dijkstra {b:?}",
                a.map(|p| p.cost)
            )),
        }
    }
    out
}
