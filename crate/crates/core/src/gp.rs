//! Gaussian-process preference model over camera poses.
//!
//! Latent utilities get a GP prior with a kernel that factorizes over yaw
//! and position; pairwise choices enter through a Bradley–Terry (logistic)
//! likelihood, and the posterior is approximated by a Laplace fit at its
//! mode.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap, Pose4};

pub const NEWTON_TOL: f64 = 1e-8;
pub const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma_f: f64,
    /// Radians.
    pub ell_rot: f64,
    /// Meters.
    pub ell_trans: f64,
    pub eps: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            sigma_f: 1.0,
            ell_rot: 0.5,
            ell_trans: 0.75,
            eps: 1e-4,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.sigma_f, self.ell_rot, self.ell_trans, self.eps]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("kernel parameters must be positive: {self:?}")))
        }
    }
}

/// Chordal distance between two yaw angles, `2 sin(|Δθ|/2)`.
pub fn chordal_yaw(a: f64, b: f64) -> f64 {
    2.0 * (0.5 * wrap(a - b).abs()).sin()
}

/// Kernel between two distinct training points. The `eps` term belongs only
/// to the diagonal of a Gram matrix and is added by [`gram`].
pub fn kernel_eval(a: &Pose4, b: &Pose4, params: &KernelParams) -> f64 {
    let c = chordal_yaw(a.theta, b.theta);
    let dp2 = (a.p - b.p).norm_squared();
    params.sigma_f.powi(2) * (-c * c / (2.0 * params.ell_rot.powi(2))).exp() * (-dp2 / (2.0 * params.ell_trans.powi(2))).exp()
}

/// Gram matrix with `eps` on the diagonal.
pub fn gram(xs: &[Pose4], params: &KernelParams) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.sigma_f.powi(2) + params.eps;
        for j in 0..i {
            let v = kernel_eval(&xs[i], &xs[j], params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-covariance `k(X, Q)`, shape `|X| × |Q|`.
pub fn cross_cov(xs: &[Pose4], qs: &[Pose4], params: &KernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), qs.len(), |i, j| kernel_eval(&xs[i], &qs[j], params))
}

/// One pairwise comparison: `s = +1` means pose `i` was preferred over `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceObservation {
    pub i: usize,
    pub j: usize,
    pub s: i8,
}

impl PreferenceObservation {
    pub fn new(i: usize, j: usize, s: i8) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidArgument(format!("observation compares pose {i} with itself")));
        }
        if s != 1 && s != -1 {
            return Err(Error::InvalidArgument(format!("preference sign must be ±1, got {s}")));
        }
        Ok(PreferenceObservation { i, j, s })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)`, stable for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    -(f64::max(-x, 0.0) + (-x.abs()).exp().ln_1p())
}

/// Bradley–Terry probability `σ(s (f_i − f_j))`. Computed through `σ(|z|)` so
/// that the probabilities of `s` and `−s` sum to exactly one.
pub fn bt_likelihood(s: i8, f_i: f64, f_j: f64) -> f64 {
    let z = s as f64 * (f_i - f_j);
    let p = sigmoid(z.abs());
    if z >= 0.0 {
        p
    } else {
        1.0 - p
    }
}

/// Sum of log Bradley–Terry probabilities.
pub fn log_likelihood(f: &DVector<f64>, obs: &[PreferenceObservation]) -> f64 {
    obs.iter().map(|o| log_sigmoid(o.s as f64 * (f[o.i] - f[o.j]))).sum()
}

/// Laplace-approximated posterior of the preference GP.
#[derive(Debug, Clone)]
pub struct GPState {
    x: Vec<Pose4>,
    obs: Vec<PreferenceObservation>,
    params: KernelParams,
    k: DMatrix<f64>,
    f_hat: DVector<f64>,
    /// `K⁻¹ f̂`.
    alpha: DVector<f64>,
    /// `D Λ^½`: incidence columns `e_i − e_j` scaled by the root curvature.
    l: DMatrix<f64>,
    /// Cholesky factor of `I + Lᵀ K L`.
    b_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    iterations: usize,
    grad_norm: f64,
}

struct Local {
    grad_ll: DVector<f64>,
    curv: DVector<f64>,
}

fn local_terms(f: &DVector<f64>, obs: &[PreferenceObservation], n: usize) -> Local {
    let mut grad_ll = DVector::zeros(n);
    let mut curv = DVector::zeros(obs.len());
    for (o_idx, o) in obs.iter().enumerate() {
        let s = o.s as f64;
        let z = s * (f[o.i] - f[o.j]);
        let sig = sigmoid(z);
        // d/df_i log σ(z) = s (1 − σ(z))
        let g = s * sigmoid(-z);
        grad_ll[o.i] += g;
        grad_ll[o.j] -= g;
        curv[o_idx] = sig * (1.0 - sig);
    }
    Local { grad_ll, curv }
}

fn scaled_incidence(obs: &[PreferenceObservation], curv: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, obs.len());
    for (c, o) in obs.iter().enumerate() {
        let r = curv[c].sqrt();
        l[(o.i, c)] = r;
        l[(o.j, c)] = -r;
    }
    l
}

fn b_factor(l: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>> {
    if l.ncols() == 0 {
        return Ok(None);
    }
    let mut b = l.transpose() * k * l;
    for i in 0..b.nrows() {
        b[(i, i)] += 1.0;
    }
    b.cholesky()
        .map(Some)
        .ok_or_else(|| Error::Numerical("I + Lᵀ K L is not positive definite".into()))
}

fn objective(alpha: &DVector<f64>, f: &DVector<f64>, obs: &[PreferenceObservation]) -> f64 {
    log_likelihood(f, obs) - 0.5 * alpha.dot(f)
}

fn check_obs(n: usize, obs: &[PreferenceObservation]) -> Result<()> {
    for o in obs {
        if o.i >= n || o.j >= n {
            return Err(Error::InvalidArgument(format!(
                "observation ({}, {}) addresses a pose beyond {n}",
                o.i, o.j
            )));
        }
        PreferenceObservation::new(o.i, o.j, o.s)?;
    }
    Ok(())
}

/// Laplace fit from a zero start.
pub fn laplace_fit(x: &[Pose4], obs: &[PreferenceObservation], params: &KernelParams) -> Result<GPState> {
    laplace_fit_warm(x, obs, params, None)
}

/// Laplace fit starting from `alpha0` (padded with zeros for new poses).
///
/// Newton steps on `Ψ(f) = log p(obs | f) − ½ fᵀ K⁻¹ f` in the stabilized
/// form `a ← b − L B⁻¹ Lᵀ K b` with `b = W f + ∇ log p`, `f = K a`; each
/// step is halved until `Ψ` does not decrease beyond rounding.
pub fn laplace_fit_warm(
    x: &[Pose4],
    obs: &[PreferenceObservation],
    params: &KernelParams,
    alpha0: Option<&DVector<f64>>,
) -> Result<GPState> {
    params.validate()?;
    let n = x.len();
    check_obs(n, obs)?;
    let k = gram(x, params);
    if k.clone().cholesky().is_none() && n > 0 {
        return Err(Error::Numerical(format!(
            "kernel matrix is not positive definite (eps = {:e})",
            params.eps
        )));
    }

    let mut alpha = DVector::zeros(n);
    if let Some(a0) = alpha0 {
        for i in 0..a0.len().min(n) {
            alpha[i] = a0[i];
        }
    }
    let mut f = &k * &alpha;
    let mut psi = objective(&alpha, &f, obs);
    let mut iterations = 0;
    loop {
        let loc = local_terms(&f, obs, n);
        let grad = &loc.grad_ll - &alpha;
        let grad_norm = grad.norm();
        let l = scaled_incidence(obs, &loc.curv, n);
        if grad_norm <= NEWTON_TOL || obs.is_empty() {
            let b_chol = b_factor(&l, &k)?;
            return Ok(GPState {
                x: x.to_vec(),
                obs: obs.to_vec(),
                params: *params,
                k,
                f_hat: f,
                alpha,
                l,
                b_chol,
                iterations,
                grad_norm,
            });
        }
        if iterations == NEWTON_MAX_ITER {
            return Err(Error::Convergence { iterations, grad_norm });
        }
        iterations += 1;

        let b_chol = b_factor(&l, &k)?.expect("observations present");
        let w_f = &l * (l.transpose() * &f);
        let b = w_f + &loc.grad_ll;
        let c = l.transpose() * (&k * &b);
        let target = &b - &l * b_chol.solve(&c);

        let dir = &target - &alpha;
        let mut step = 1.0;
        loop {
            let cand = &alpha + &dir * step;
            let f_c = &k * &cand;
            let psi_c = objective(&cand, &f_c, obs);
            // near the mode a Newton step changes Ψ by less than rounding;
            // such steps are taken rather than halved into stagnation
            let slack = 1e-12 * (1.0 + psi.abs());
            if psi_c >= psi - slack || step < 1e-10 {
                alpha = cand;
                f = f_c;
                psi = psi_c;
                break;
            }
            step *= 0.5;
        }
    }
}

impl GPState {
    pub fn poses(&self) -> &[Pose4] {
        &self.x
    }

    pub fn observations(&self) -> &[PreferenceObservation] {
        &self.obs
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Posterior mode at the training poses.
    pub fn f_hat(&self) -> &DVector<f64> {
        &self.f_hat
    }

    /// `K⁻¹ f̂`, usable as a warm start.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Gram matrix of the training poses, `eps` included.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Negative log-likelihood Hessian at the mode, `W = L Lᵀ`.
    pub fn hessian(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    /// Laplace predictive mean and covariance at `q`. The covariance uses
    /// the query Gram matrix (with `eps` on its diagonal) and is symmetrized.
    pub fn predict(&self, q: &[Pose4]) -> (DVector<f64>, DMatrix<f64>) {
        let ks = cross_cov(&self.x, q, &self.params);
        let mean = ks.transpose() * &self.alpha;
        let mut cov = gram(q, &self.params);
        if let Some(chol) = &self.b_chol {
            let v = self.l.transpose() * &ks;
            let sol = chol.solve(&v);
            cov -= v.transpose() * sol;
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        (mean, sym)
    }

    /// One joint draw from the predictive Gaussian at `q`.
    pub fn sample<R: Rng + ?Sized>(&self, q: &[Pose4], rng: &mut R) -> DVector<f64> {
        let (mean, cov) = self.predict(q);
        sample_gaussian(&mean, &cov, rng)
    }
}

/// Free-function form of [`GPState::predict`].
pub fn posterior_predict(state: &GPState, q: &[Pose4]) -> (DVector<f64>, DMatrix<f64>) {
    state.predict(q)
}

/// Free-function form of [`GPState::sample`].
pub fn posterior_sample<R: Rng + ?Sized>(state: &GPState, q: &[Pose4], rng: &mut R) -> DVector<f64> {
    state.sample(q, rng)
}

/// Draw from `N(mean, cov)` through a symmetric eigendecomposition, with
/// negative eigenvalues clamped to zero. A zero covariance returns `mean`.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = mean.len();
    let z: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    if n == 0 {
        return mean.clone();
    }
    let eig = SymmetricEigen::new(cov.clone());
    let scaled = DVector::from_fn(n, |i, _| eig.eigenvalues[i].max(0.0).sqrt() * z[i]);
    mean + eig.eigenvectors * scaled
}
