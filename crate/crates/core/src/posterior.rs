//! Exact posterior quantities in the sequence model.
//!
//! With a preconditioned prior center the posterior mean acts on each
//! coordinate as `x_hat_j = m_j z_j`, where
//! `m_j = sqrt(c_j lambda_j) (1 + alpha g(lambda_j)) / (alpha + lambda_j)`, and the
//! posterior variance of coordinate `j` is `delta^2 c_j / (alpha + lambda_j)`.
//! Squared bias, estimation variance and spread are therefore plain sums over
//! the spectrum.

use crate::error::{require_positive, Result, SpcError};
use crate::exec::{self, Backend};
use crate::filters::Filter;
use crate::spectrum::{SpectralProblem, Truth};

/// The three contraction components at one `(alpha, delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub alpha: f64,
    pub delta: f64,
    pub bias_sq: f64,
    pub est_var: f64,
    pub spread: f64,
    pub spc: f64,
}

/// Per-coordinate action of the posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateRule {
    pub j: usize,
    /// `m_j` with `x_hat_j = m_j z_j`.
    pub mean_gain: f64,
    /// `sqrt(tau_j)`, so that `E z_j = forward_sv * x*_j`.
    pub forward_sv: f64,
    pub post_var: f64,
}

impl CoordinateRule {
    /// `1 - m_j sqrt(tau_j)`, the factor left on `x*_j` by the mean.
    pub fn mean_defect(&self) -> f64 {
        1.0 - self.mean_gain * self.forward_sv
    }
}

fn check_truth(problem: &SpectralProblem, truth: &Truth) -> Result<()> {
    if truth.coords().len() != problem.n() {
        return Err(SpcError::invalid(
            "truth",
            format!("has {} coordinates, problem has {}", truth.coords().len(), problem.n()),
        ));
    }
    Ok(())
}

/// `s_alpha(l) r_alpha(l)`: what the posterior mean leaves of each truth coordinate.
#[inline]
pub(crate) fn bias_factor(filter: &Filter, alpha: f64, lambda: f64) -> f64 {
    alpha / (alpha + lambda) * filter.r_unchecked(alpha, lambda)
}

/// `(1 + alpha g(l)) l / (alpha + l)`, the mean's gain on `E z` in `B`-coordinates.
#[inline]
pub(crate) fn mean_factor(filter: &Filter, alpha: f64, lambda: f64) -> f64 {
    (1.0 + filter.alpha_g_unchecked(alpha, lambda)) * lambda / (alpha + lambda)
}

/// `|1 - mean_factor - s r|`, zero up to rounding for every filter.
pub fn mean_identity_residual(filter: &Filter, alpha: f64, lambda: f64) -> Result<f64> {
    require_positive("alpha", alpha)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(SpcError::OutOfDomain { what: "lambda", value: lambda });
    }
    Ok((1.0 - mean_factor(filter, alpha, lambda) - bias_factor(filter, alpha, lambda)).abs())
}

pub fn bias_sq(problem: &SpectralProblem, truth: &Truth, filter: &Filter, alpha: f64) -> Result<f64> {
    bias_sq_with(Backend::default(), problem, truth, filter, alpha)
}

/// `sum_j (s_alpha(lambda_j) r_alpha(lambda_j) x*_j)^2`.
pub fn bias_sq_with(
    backend: Backend,
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    alpha: f64,
) -> Result<f64> {
    require_positive("alpha", alpha)?;
    check_truth(problem, truth)?;
    let (lambda, x) = (problem.lambda(), truth.coords());
    Ok(exec::spectral_sum_with(backend, problem.n(), |i| {
        let v = bias_factor(filter, alpha, lambda[i]) * x[i];
        v * v
    }))
}

pub fn est_var(problem: &SpectralProblem, filter: &Filter, alpha: f64, delta: f64) -> Result<f64> {
    est_var_with(Backend::default(), problem, filter, alpha, delta)
}

/// `delta^2 sum_j (1 + alpha g(lambda_j))^2 lambda_j c_j / (alpha + lambda_j)^2`.
pub fn est_var_with(
    backend: Backend,
    problem: &SpectralProblem,
    filter: &Filter,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    require_positive("alpha", alpha)?;
    require_positive("delta", delta)?;
    let (c, lambda) = (problem.c(), problem.lambda());
    let sum = exec::spectral_sum_with(backend, problem.n(), |i| {
        let l = lambda[i];
        let amp = (1.0 + filter.alpha_g_unchecked(alpha, l)) / (alpha + l);
        amp * amp * l * c[i]
    });
    Ok(delta * delta * sum)
}

pub fn net_spread(problem: &SpectralProblem, alpha: f64) -> Result<f64> {
    net_spread_with(Backend::default(), problem, alpha)
}

/// `S(alpha) = tr((alpha I + B*B)^{-1} C0) = sum_j c_j / (alpha + lambda_j)`.
pub fn net_spread_with(backend: Backend, problem: &SpectralProblem, alpha: f64) -> Result<f64> {
    require_positive("alpha", alpha)?;
    let (c, lambda) = (problem.c(), problem.lambda());
    Ok(exec::spectral_sum_with(backend, problem.n(), |i| c[i] / (alpha + lambda[i])))
}

pub fn spc(
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    alpha: f64,
    delta: f64,
) -> Result<PosteriorSummary> {
    spc_with(Backend::default(), problem, truth, filter, alpha, delta)
}

pub fn spc_with(
    backend: Backend,
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    alpha: f64,
    delta: f64,
) -> Result<PosteriorSummary> {
    require_positive("delta", delta)?;
    let bias_sq = bias_sq_with(backend, problem, truth, filter, alpha)?;
    let est_var = est_var_with(backend, problem, filter, alpha, delta)?;
    let spread = delta * delta * net_spread_with(backend, problem, alpha)?;
    Ok(PosteriorSummary {
        alpha,
        delta,
        bias_sq,
        est_var,
        spread,
        spc: bias_sq + est_var + spread,
    })
}

/// Mean gain and posterior variance of coordinate `j` (one-based).
pub fn coordinate_rule(
    problem: &SpectralProblem,
    filter: &Filter,
    alpha: f64,
    delta: f64,
    j: usize,
) -> Result<CoordinateRule> {
    require_positive("alpha", alpha)?;
    require_positive("delta", delta)?;
    if j == 0 || j > problem.n() {
        return Err(SpcError::IndexOutOfRange { index: j, n: problem.n() });
    }
    Ok(rule_unchecked(problem, filter, alpha, delta, j - 1))
}

pub(crate) fn rule_unchecked(
    problem: &SpectralProblem,
    filter: &Filter,
    alpha: f64,
    delta: f64,
    i: usize,
) -> CoordinateRule {
    let (c, l) = (problem.c()[i], problem.lambda()[i]);
    CoordinateRule {
        j: i + 1,
        mean_gain: (c * l).sqrt() * (1.0 + filter.alpha_g_unchecked(alpha, l)) / (alpha + l),
        forward_sv: problem.tau()[i].sqrt(),
        post_var: delta * delta * c / (alpha + l),
    }
}
