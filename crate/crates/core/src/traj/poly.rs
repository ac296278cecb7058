use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEGREE: usize = 7;
const NC: usize = DEGREE + 1;

/// One degree-7 piece. Coefficients are in the normalized local time
/// `u = (t - t_start) / duration`, per axis, lowest power first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySegment {
    pub duration: f64,
    pub coeffs: [[f64; NC]; 3],
}

/// `k!/(k-r)!`
fn falling(k: usize, r: usize) -> f64 {
    ((k + 1 - r)..=k).map(|x| x as f64).product()
}

/// Row of `d^r/du^r [1, u, …, u^7]`.
fn basis(u: f64, r: usize) -> [f64; NC] {
    let mut b = [0.0; NC];
    for (k, v) in b.iter_mut().enumerate().skip(r) {
        *v = falling(k, r) * u.powi((k - r) as i32);
    }
    b
}

impl PolySegment {
    /// `r`-th time derivative at local time `s ∈ [0, duration]`.
    pub fn eval(&self, s: f64, r: usize) -> Vector3<f64> {
        let u = if self.duration > 0.0 { s / self.duration } else { 0.0 };
        let b = basis(u, r);
        let scale = self.duration.powi(-(r as i32));
        let mut out = Vector3::zeros();
        for axis in 0..3 {
            out[axis] = scale * b.iter().zip(&self.coeffs[axis]).map(|(x, c)| x * c).sum::<f64>();
        }
        out
    }
}

/// Piecewise polynomial position trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolyTraj {
    /// Segment boundaries, `breaks[0] = 0`.
    pub breaks: Vec<f64>,
    pub segments: Vec<PolySegment>,
    /// Times at which the trajectory passes the waypoints.
    pub knot_times: Vec<f64>,
    /// Position held by a trajectory without segments.
    pub anchor: Vector3<f64>,
}

impl PiecewisePolyTraj {
    pub fn stationary(p: Vector3<f64>) -> Self {
        PiecewisePolyTraj {
            breaks: vec![0.0],
            segments: Vec::new(),
            knot_times: vec![0.0],
            anchor: p,
        }
    }

    pub fn duration(&self) -> f64 {
        *self.breaks.last().expect("breaks nonempty")
    }

    /// Index of the segment that owns `t` (right-continuous except at the end).
    pub fn segment_index(&self, t: f64) -> usize {
        let n = self.segments.len();
        let pos = self.breaks.partition_point(|&b| b <= t);
        pos.saturating_sub(1).min(n.saturating_sub(1))
    }

    /// `r`-th derivative at `t`, clamped to the time range.
    pub fn eval(&self, t: f64, r: usize) -> Vector3<f64> {
        if self.segments.is_empty() {
            return if r == 0 { self.anchor } else { Vector3::zeros() };
        }
        let t = t.clamp(0.0, self.duration());
        let j = self.segment_index(t);
        self.eval_on(j, t, r)
    }

    /// Evaluates segment `j`'s polynomial at global time `t`, even at its
    /// boundary. Used for one-sided derivative comparisons.
    pub fn eval_on(&self, j: usize, t: f64, r: usize) -> Vector3<f64> {
        self.segments[j].eval(t - self.breaks[j], r)
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.eval(t, 0)
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        self.eval(t, 1)
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        self.eval(t, 2)
    }

    /// Same path traversed `factor` times slower.
    pub fn time_scaled(&self, factor: f64) -> Self {
        PiecewisePolyTraj {
            breaks: self.breaks.iter().map(|b| b * factor).collect(),
            segments: self
                .segments
                .iter()
                .map(|s| PolySegment {
                    duration: s.duration * factor,
                    coeffs: s.coeffs,
                })
                .collect(),
            knot_times: self.knot_times.iter().map(|k| k * factor).collect(),
            anchor: self.anchor,
        }
    }
}

/// Minimum-snap interpolation through `points` at `times`, rest to rest.
///
/// Solves the equality-constrained quadratic program per axis through its
/// KKT system: interpolation at every break, continuity of velocity,
/// acceleration and jerk at interior breaks, zero velocity and acceleration
/// at both ends.
pub fn min_snap(points: &[Vector3<f64>], times: &[f64]) -> Result<PiecewisePolyTraj> {
    if points.len() < 2 || points.len() != times.len() {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 points with matching times, got {} points and {} times",
            points.len(),
            times.len()
        )));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidArgument("first time must be 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("times must be strictly increasing".into()));
    }
    let m = points.len() - 1;
    let durations: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let nv = NC * m;
    let nc = 2 * m + 3 * (m - 1) + 4;
    let n = nv + nc;
    let mut kkt = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, 3);

    // Snap cost of segment j is T_j^-7 ∫₀¹ (d⁴p/du⁴)² du; a common scale
    // keeps the blocks near unit size.
    let t_ref = durations.iter().sum::<f64>() / m as f64;
    for (j, &dur) in durations.iter().enumerate() {
        let w = (t_ref / dur).powi(7);
        for k in 4..NC {
            for l in 4..NC {
                let q = falling(k, 4) * falling(l, 4) / (k + l - 7) as f64;
                kkt[(NC * j + k, NC * j + l)] = w * q;
            }
        }
    }

    let mut row = nv;
    let put = |kkt: &mut DMatrix<f64>, row: usize, j: usize, coeffs: &[f64; NC], scale: f64| {
        for k in 0..NC {
            kkt[(row, NC * j + k)] += scale * coeffs[k];
            kkt[(NC * j + k, row)] += scale * coeffs[k];
        }
    };
    for j in 0..m {
        put(&mut kkt, row, j, &basis(0.0, 0), 1.0);
        for a in 0..3 {
            rhs[(row, a)] = points[j][a];
        }
        row += 1;
        put(&mut kkt, row, j, &basis(1.0, 0), 1.0);
        for a in 0..3 {
            rhs[(row, a)] = points[j + 1][a];
        }
        row += 1;
    }
    for j in 1..m {
        let (tl, tr) = (durations[j - 1], durations[j]);
        for r in 1..4 {
            // (d^r p_left/du^r)(1)/tl^r = (d^r p_right/du^r)(0)/tr^r, multiplied
            // through by t_ref^r
            put(&mut kkt, row, j - 1, &basis(1.0, r), (t_ref / tl).powi(r as i32));
            put(&mut kkt, row, j, &basis(0.0, r), -(t_ref / tr).powi(r as i32));
            row += 1;
        }
    }
    for r in 1..3 {
        put(&mut kkt, row, 0, &basis(0.0, r), 1.0);
        row += 1;
        put(&mut kkt, row, m - 1, &basis(1.0, r), 1.0);
        row += 1;
    }
    debug_assert_eq!(row, n);

    let sol = kkt
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular minimum-snap system".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite minimum-snap solution".into()));
    }
    let segments = durations
        .iter()
        .enumerate()
        .map(|(j, &duration)| {
            let mut coeffs = [[0.0; NC]; 3];
            for (a, axis) in coeffs.iter_mut().enumerate() {
                for (k, c) in axis.iter_mut().enumerate() {
                    *c = sol[(NC * j + k, a)];
                }
            }
            PolySegment { duration, coeffs }
        })
        .collect();
    Ok(PiecewisePolyTraj {
        breaks: times.to_vec(),
        segments,
        knot_times: times.to_vec(),
        anchor: points[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rest_to_rest_is_a_straight_line() {
        let a = Vector3::new(0.5, -1.0, 1.2);
        let b = Vector3::new(3.0, 2.0, 1.7);
        let traj = min_snap(&[a, b], &[0.0, 2.5]).unwrap();
        let dir = (b - a).normalize();
        for i in 0..=200 {
            let t = 2.5 * i as f64 / 200.0;
            let d = traj.position(t) - a;
            let off = (d - dir * d.dot(&dir)).norm();
            assert!(off < 1e-6, "deviation {off} at t={t}");
        }
        assert!((traj.position(0.0) - a).norm() < 1e-9);
        assert!((traj.position(2.5) - b).norm() < 1e-9);
        for t in [0.0, 2.5] {
            assert!(traj.velocity(t).norm() < 1e-9);
            assert!(traj.acceleration(t).norm() < 1e-9);
            // free jerk at the ends gives the natural condition snap = 0
            assert!(traj.eval(t, 4).norm() < 1e-6);
        }
    }

    #[test]
    fn identical_points_give_constant() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        let traj = min_snap(&[p, p, p], &[0.0, 0.1, 0.2]).unwrap();
        for i in 0..=20 {
            let t = 0.01 * i as f64;
            assert!((traj.position(t) - p).norm() < 1e-12);
            for r in 1..4 {
                assert!(traj.eval(t, r).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn optimal_interior_knots_are_c6() {
        // A snap-minimizing interpolant is a degree-7 spline with six
        // continuous derivatives at interior knots, even though only three
        // are constrained.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..6)
            .map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0)))
            .collect();
        let mut times = vec![0.0];
        for _ in 1..6 {
            let last = *times.last().unwrap();
            times.push(last + rng.random_range(0.5..2.0));
        }
        let traj = min_snap(&pts, &times).unwrap();
        for j in 1..5 {
            let t = traj.breaks[j];
            for r in 0..7 {
                let left = traj.eval_on(j - 1, t, r);
                let right = traj.eval_on(j, t, r);
                let scale = 1.0 + left.norm();
                assert!((left - right).norm() < 1e-6 * scale, "r={r} knot {j}: {left} vs {right}");
            }
            assert!((traj.position(t) - pts[j]).norm() < 1e-9);
        }
    }

    #[test]
    fn time_scaling_preserves_path() {
        let pts = [Vector3::zeros(), Vector3::new(1.0, 1.0, 0.0), Vector3::new(2.0, 0.0, 0.5)];
        let a = min_snap(&pts, &[0.0, 1.0, 2.5]).unwrap();
        let b = min_snap(&pts, &[0.0, 1.2, 3.0]).unwrap();
        let scaled = a.time_scaled(1.2);
        for i in 0..=30 {
            let t = 0.1 * i as f64;
            assert!((scaled.position(t) - b.position(t)).norm() < 1e-9);
            assert!((scaled.velocity(t) - b.velocity(t)).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_times() {
        let p = [Vector3::zeros(), Vector3::x()];
        assert!(min_snap(&p, &[0.0, 0.0]).is_err());
        assert!(min_snap(&p[..1], &[0.0]).is_err());
        assert!(min_snap(&p, &[0.5, 1.0]).is_err());
    }
}
