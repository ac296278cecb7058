use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::wrap;

/// Lifts wrapped angles to a continuous sequence: each successive difference
/// is brought into `(-π, π]`.
pub fn unwrap_yaw(thetas: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(thetas.len());
    for (i, &th) in thetas.iter().enumerate() {
        if i == 0 {
            out.push(th);
        } else {
            let prev = out[i - 1];
            out.push(prev + wrap(th - thetas[i - 1]));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndCondition {
    /// Zero second derivative at both ends.
    Natural,
    /// Prescribed first derivative at each end.
    Clamped { start: f64, end: f64 },
}

/// C² cubic spline through `(knots[i], values[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YawSpline {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    /// Per interval `[a, b, c, d]` of `a + b h + c h² + d h³`, `h = t - knots[i]`.
    pub coeffs: Vec<[f64; 4]>,
}

/// Natural cubic spline through the unwrapped yaw targets.
pub fn fit_yaw_spline(knots: &[f64], thetas: &[f64]) -> Result<YawSpline> {
    fit_yaw_spline_with(knots, thetas, EndCondition::Natural)
}

pub fn fit_yaw_spline_with(knots: &[f64], thetas: &[f64], end: EndCondition) -> Result<YawSpline> {
    if knots.len() != thetas.len() {
        return Err(Error::InvalidArgument(format!(
            "{} knots but {} values",
            knots.len(),
            thetas.len()
        )));
    }
    let n = knots.len();
    if n < 2 {
        return Err(Error::DegenerateSpline(n));
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("spline knots must be strictly increasing".into()));
    }
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let slope: Vec<f64> = (0..n - 1).map(|i| (thetas[i + 1] - thetas[i]) / h[i]).collect();

    // Tridiagonal system for the knot second derivatives m.
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    match end {
        EndCondition::Natural => {
            diag[0] = 1.0;
            diag[n - 1] = 1.0;
        }
        EndCondition::Clamped { start, end } => {
            diag[0] = 2.0 * h[0];
            sup[0] = h[0];
            rhs[0] = 6.0 * (slope[0] - start);
            sub[n - 1] = h[n - 2];
            diag[n - 1] = 2.0 * h[n - 2];
            rhs[n - 1] = 6.0 * (end - slope[n - 2]);
        }
    }
    for i in 1..n - 1 {
        sub[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = 6.0 * (slope[i] - slope[i - 1]);
    }
    // Thomas algorithm; the system is diagonally dominant.
    for i in 1..n {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
    }

    let coeffs = (0..n - 1)
        .map(|i| {
            let a = thetas[i];
            let b = slope[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
            let c = 0.5 * m[i];
            let d = (m[i + 1] - m[i]) / (6.0 * h[i]);
            [a, b, c, d]
        })
        .collect();
    Ok(YawSpline {
        knots: knots.to_vec(),
        values: thetas.to_vec(),
        coeffs,
    })
}

impl YawSpline {
    /// Spline holding `theta` over `[t, t]`.
    pub fn constant(t: f64, theta: f64) -> Self {
        YawSpline {
            knots: vec![t],
            values: vec![theta],
            coeffs: Vec::new(),
        }
    }

    pub fn interval(&self, t: f64) -> usize {
        let n = self.coeffs.len();
        self.knots.partition_point(|&k| k <= t).saturating_sub(1).min(n.saturating_sub(1))
    }

    /// `r`-th derivative (r ≤ 3) of interval `i`'s cubic at `t`.
    pub fn eval_on(&self, i: usize, t: f64, r: usize) -> f64 {
        let [a, b, c, d] = self.coeffs[i];
        let h = t - self.knots[i];
        match r {
            0 => a + h * (b + h * (c + h * d)),
            1 => b + h * (2.0 * c + 3.0 * d * h),
            2 => 2.0 * c + 6.0 * d * h,
            3 => 6.0 * d,
            _ => 0.0,
        }
    }

    /// `r`-th derivative at `t`, clamped to the knot range.
    pub fn eval(&self, t: f64, r: usize) -> f64 {
        if self.coeffs.is_empty() {
            return if r == 0 { self.values[0] } else { 0.0 };
        }
        let t = t.clamp(self.knots[0], *self.knots.last().expect("nonempty"));
        self.eval_on(self.interval(t), t, r)
    }

    pub fn time_scaled(&self, factor: f64) -> Self {
        YawSpline {
            knots: self.knots.iter().map(|k| k * factor).collect(),
            values: self.values.clone(),
            coeffs: self
                .coeffs
                .iter()
                .map(|&[a, b, c, d]| [a, b / factor, c / factor.powi(2), d / factor.powi(3)])
                .collect(),
        }
    }
}
