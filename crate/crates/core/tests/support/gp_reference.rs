//! Brute-force references for small Laplace fits: a fixed battery of 2- and
//! 3-pose instances, dense maximization of the exact log posterior, and 2-D
//! quadrature of the exact posterior mean.
#![allow(dead_code)]

use camshot_core::geom::Pose4;
use camshot_core::gp::{cross_cov, gram, laplace_fit, log_likelihood, KernelParams, PreferenceObservation};
use nalgebra::{DMatrix, DVector};

pub struct Instance {
    pub name: String,
    pub x: Vec<Pose4>,
    pub obs: Vec<PreferenceObservation>,
}

pub fn pose(x: f64, y: f64, th: f64) -> Pose4 {
    Pose4::from_xyz(x, y, 1.0, th).unwrap()
}

pub fn o(i: usize, j: usize, s: i8) -> PreferenceObservation {
    PreferenceObservation::new(i, j, s).unwrap()
}

/// Every 2-pose layout with every observation multiset of size 1..=3 up to
/// relabeling, plus 3-pose layouts with chains, cycles and repeats.
pub fn battery() -> Vec<Instance> {
    let pairs = [
        ("near", vec![pose(0.0, 0.0, 0.0), pose(0.2, 0.0, 0.1)]),
        ("mid", vec![pose(0.0, 0.0, 0.0), pose(0.6, 0.3, 0.4)]),
        ("far", vec![pose(0.0, 0.0, 0.0), pose(2.0, -1.0, 2.5)]),
    ];
    let pair_obs: Vec<(&str, Vec<PreferenceObservation>)> = vec![
        ("w", vec![o(0, 1, 1)]),
        ("ww", vec![o(0, 1, 1), o(0, 1, 1)]),
        ("wl", vec![o(0, 1, 1), o(1, 0, 1)]),
        ("www", vec![o(0, 1, 1), o(1, 0, -1), o(0, 1, 1)]),
        ("wwl", vec![o(0, 1, 1), o(0, 1, 1), o(0, 1, -1)]),
    ];
    let triples = [
        ("line", vec![pose(0.0, 0.0, 0.0), pose(0.5, 0.0, 0.0), pose(1.0, 0.0, 0.0)]),
        ("spread", vec![pose(0.0, 0.0, 0.0), pose(0.8, 0.6, 1.0), pose(-0.7, 0.9, -2.0)]),
    ];
    let triple_obs: Vec<(&str, Vec<PreferenceObservation>)> = vec![
        ("single", vec![o(2, 0, 1)]),
        ("chain", vec![o(0, 1, 1), o(1, 2, 1)]),
        ("cycle", vec![o(0, 1, 1), o(1, 2, 1), o(2, 0, 1)]),
        ("star", vec![o(0, 1, 1), o(0, 2, 1), o(1, 2, -1)]),
        ("repeat", vec![o(1, 0, 1), o(1, 0, 1), o(2, 1, 1)]),
    ];
    let mut out = Vec::new();
    for (pn, x) in &pairs {
        for (on, obs) in &pair_obs {
            out.push(Instance {
                name: format!("2/{pn}/{on}"),
                x: x.clone(),
                obs: obs.clone(),
            });
        }
    }
    for (pn, x) in &triples {
        for (on, obs) in &triple_obs {
            out.push(Instance {
                name: format!("3/{pn}/{on}"),
                x: x.clone(),
                obs: obs.clone(),
            });
        }
    }
    out
}

pub fn psi(f: &DVector<f64>, kinv: &DMatrix<f64>, obs: &[PreferenceObservation]) -> f64 {
    log_likelihood(f, obs) - 0.5 * f.dot(&(kinv * f))
}

/// Grid search with zoom: 21 points per axis, the box shrinks around the
/// best point by 5× per level.
pub fn dense_argmax(kinv: &DMatrix<f64>, obs: &[PreferenceObservation], n: usize) -> DVector<f64> {
    let mut center = DVector::zeros(n);
    let mut half = 6.0;
    let pts: usize = 21;
    for _ in 0..14 {
        let mut best = (f64::NEG_INFINITY, center.clone());
        let total = pts.pow(n as u32);
        for flat in 0..total {
            let mut f = center.clone();
            let mut r = flat;
            for a in 0..n {
                let k = r % pts;
                r /= pts;
                f[a] += half * (2.0 * k as f64 / (pts - 1) as f64 - 1.0);
            }
            let v = psi(&f, kinv, obs);
            if v > best.0 {
                best = (v, f);
            }
        }
        center = best.1;
        half /= 5.0;
    }
    center
}

/// Exact posterior mean of `f` for two poses, by a tensor trapezoid rule in
/// whitened coordinates `f = L z`.
pub fn quadrature_mean(k: &DMatrix<f64>, obs: &[PreferenceObservation]) -> DVector<f64> {
    let l = k.clone().cholesky().unwrap().l();
    let (m, span) = (1601, 9.0);
    let h = 2.0 * span / (m - 1) as f64;
    let (mut z0, mut acc) = (0.0, DVector::zeros(2));
    for a in 0..m {
        for b in 0..m {
            let z = DVector::from_vec(vec![-span + a as f64 * h, -span + b as f64 * h]);
            let f = &l * &z;
            let w = (-0.5 * z.dot(&z) + log_likelihood(&f, obs)).exp();
            z0 += w;
            acc += f * w;
        }
    }
    acc / z0
}

pub fn laplace_and_exact_means(inst: &Instance, params: &KernelParams) -> (DVector<f64>, DVector<f64>) {
    let k = gram(&inst.x, params);
    let gp = laplace_fit(&inst.x, &inst.obs, params).unwrap();
    let (mean, _) = gp.predict(&inst.x);
    // the predictive mean at training poses uses the eps-free cross
    // covariance, so the exact counterpart is k(X, X) K⁻¹ E[f]
    let kx = cross_cov(&inst.x, &inst.x, params);
    let exact = kx.transpose() * k.clone().try_inverse().unwrap() * quadrature_mean(&k, &inst.obs);
    (mean, exact)
}
