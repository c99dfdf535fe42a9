//! Property suite run by `verify`: each check reports its measured margin.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::filters::{check_qualification, log_grid, Filter, FilterKind};
use crate::posterior;
use crate::spectrum::{Family, IndexFunction, SpectralProblem};

pub const IDENTITY_TOL: f64 = 1e-12;
pub const QUALIFICATION_TOL: f64 = 1.001;
pub const LINK_TOL: f64 = 1e-10;
pub const ROUND_TRIP_TOL: f64 = 1e-12;
pub const SEVERE_ASYMPTOTE_TOL: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skip => "skip",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub status: Status,
    /// Worst value seen; compared against `threshold`.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn bounded(name: impl Into<String>, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if measured <= threshold { Status::Pass } else { Status::Fail },
            measured,
            threshold,
            detail: detail.into(),
        }
    }

    fn skipped(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Skip,
            measured: f64::NAN,
            threshold: f64::NAN,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub identity_draws: usize,
    /// Replaces the filter's `gamma_star` in the variance bound.
    pub gamma_star_override: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            identity_draws: 10_000,
            gamma_star_override: None,
        }
    }
}

fn identity_filters() -> Vec<Filter> {
    let mut v = vec![Filter::none(), Filter::tikhonov(), Filter::cutoff()];
    v.extend((1..=5).map(|k| Filter::kfold(k).expect("k >= 1")));
    v
}

/// `1 - (1 + alpha g) l/(alpha + l) = s r` on random `(alpha, j, filter)`.
pub fn scalar_identity(problem: &SpectralProblem, extra: &Filter, draws: usize, seed: u64) -> Result<CheckOutcome> {
    let mut filters = identity_filters();
    filters.push(*extra);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let alpha = 10f64.powf(rng.random_range(-12.0..0.0));
        let j = rng.random_range(0..problem.n());
        let f = &filters[rng.random_range(0..filters.len())];
        worst = worst.max(posterior::mean_identity_residual(f, alpha, problem.lambda()[j])?);
    }
    Ok(CheckOutcome::bounded(
        "scalar_identity",
        worst,
        IDENTITY_TOL,
        format!("{draws} draws over {} filters", filters.len()),
    ))
}

fn alpha_grid(problem: &SpectralProblem, points: usize) -> Result<Vec<f64>> {
    let lo = (problem.lambda_min_positive() * 1e-2).max(1e-14);
    log_grid(lo, 10.0 * problem.domain_max(), points)
}

/// `V <= (1 + gamma*)^2 tr C` over an `(alpha, delta)` grid, together with its
/// per-coordinate form `(1 + alpha g)^2 l/(alpha + l) <= (1 + gamma*)^2`.
pub fn variance_spread(problem: &SpectralProblem, filter: &Filter, gamma_star: f64) -> Result<CheckOutcome> {
    let bound = (1.0 + gamma_star).powi(2);
    let (mut trace, mut pointwise): (f64, f64) = (0.0, 0.0);
    for alpha in alpha_grid(problem, 16)? {
        for delta in [1e-4, 1e-2, 1.0] {
            let v = posterior::est_var(problem, filter, alpha, delta)?;
            let s = delta * delta * posterior::net_spread(problem, alpha)?;
            trace = trace.max(v / (bound * s));
        }
        for &l in problem.lambda() {
            let amp = 1.0 + filter.alpha_g_unchecked(alpha, l);
            pointwise = pointwise.max(amp * amp * l / (alpha + l) / bound);
        }
    }
    Ok(CheckOutcome::bounded(
        format!("variance_spread[{filter}]"),
        trace.max(pointwise),
        1.0 + 1e-12,
        format!("trace ratio {trace:.6}, coordinate ratio {pointwise:.6}, gamma*={gamma_star}"),
    ))
}

/// Grid margins for Tikhonov with `t`, cut-off with `exp(-beta/t)`, `k`-fold with `t^k`.
pub fn qualification_margins(k: u32) -> Result<Vec<CheckOutcome>> {
    let alphas = log_grid(1e-8, 1.0, 33)?;
    let ts = log_grid(1e-10, 10.0, 121)?;
    let cases = [
        ("qualification[tikhonov,t]", Filter::tikhonov(), IndexFunction::power(1.0)?),
        ("qualification[cutoff,exp(-1/t)]", Filter::cutoff(), IndexFunction::exp_type(1.0, 1.0)?),
        ("qualification[kfold,t^k]", Filter::kfold(k)?, IndexFunction::power(k as f64)?),
    ];
    cases
        .into_iter()
        .map(|(name, filter, phi)| {
            let r = check_qualification(&filter, &phi, 1.0, &alphas, &ts)?;
            Ok(CheckOutcome::bounded(
                name,
                r.margin,
                QUALIFICATION_TOL,
                format!("{filter} with {}", phi.label()),
            ))
        })
        .collect()
}

/// Largest `S(alpha_{i+1}) / S(alpha_i)` on an increasing 64-point grid; must stay below 1.
pub fn spread_monotone(problem: &SpectralProblem) -> Result<CheckOutcome> {
    let grid = alpha_grid(problem, 64)?;
    let mut prev = posterior::net_spread(problem, grid[0])?;
    let mut worst: f64 = 0.0;
    for &a in &grid[1..] {
        let s = posterior::net_spread(problem, a)?;
        worst = worst.max(s / prev);
        prev = s;
    }
    let mut out = CheckOutcome::bounded("spread_monotone", worst, 1.0, "max S(alpha_next)/S(alpha)");
    if worst >= 1.0 {
        out.status = Status::Fail;
    }
    Ok(out)
}

/// `psi^2(c_j) = tau_j` and `Theta^2(c_j) = lambda_j`, relative error.
pub fn link_consistency(problem: &SpectralProblem) -> Result<CheckOutcome> {
    if matches!(problem.family(), Family::Custom) {
        return Ok(CheckOutcome::skipped("link_consistency", "custom spectrum has no link function"));
    }
    let mut worst: f64 = 0.0;
    for j in 0..problem.n() {
        let (c, tau, l) = (problem.c()[j], problem.tau()[j], problem.lambda()[j]);
        if tau < f64::MIN_POSITIVE || l < f64::MIN_POSITIVE {
            continue;
        }
        worst = worst.max((problem.psi_squared(c)? / tau - 1.0).abs());
        worst = worst.max((problem.theta_squared(c)? / l - 1.0).abs());
    }
    Ok(CheckOutcome::bounded("link_consistency", worst, LINK_TOL, "normal-range coordinates"))
}

/// `Theta^2(f^2(s)) = s` on a grid over the spectrum.
pub fn inversion_round_trip(problem: &SpectralProblem) -> Result<CheckOutcome> {
    if matches!(problem.family(), Family::Custom) {
        return Ok(CheckOutcome::skipped("inversion_round_trip", "custom spectrum has no link function"));
    }
    let mut worst: f64 = 0.0;
    for s in log_grid(problem.lambda_min_positive(), problem.lambda_max(), 64)? {
        let t = problem.f_squared(s)?;
        worst = worst.max((problem.theta_squared(t)? / s - 1.0).abs());
    }
    Ok(CheckOutcome::bounded("inversion_round_trip", worst, ROUND_TRIP_TOL, "64 points"))
}

/// `(Theta^2)^{-1}(s)` against `log(s^{-1/(2q)})^{-(1+2a)/b}`, relative to the asymptote.
pub fn severe_asymptote(a: f64, q: f64, b: f64, s: f64) -> Result<CheckOutcome> {
    let p = SpectralProblem::from_family(Family::SevereExp { a, q, b }, 2)?;
    let numeric = p.f_squared(s)?;
    let asym = (-s.ln() / (2.0 * q)).powf(-(1.0 + 2.0 * a) / b);
    Ok(CheckOutcome::bounded(
        "severe_asymptote",
        (numeric / asym - 1.0).abs(),
        SEVERE_ASYMPTOTE_TOL,
        format!("s={s:e}: inverse {numeric:.6e}, asymptote {asym:.6e}"),
    ))
}

/// The always-on suite for one problem and filter.
pub fn verify(problem: &SpectralProblem, filter: &Filter, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = vec![scalar_identity(problem, filter, opts.identity_draws, opts.seed)?];
    let gamma = opts.gamma_star_override.unwrap_or(filter.gamma_star());
    checks.push(variance_spread(problem, filter, gamma)?);
    if filter.kind() != FilterKind::None {
        checks.push(variance_spread(problem, &Filter::none(), 0.0)?);
    }
    let k = match filter.kind() {
        FilterKind::KFold(k) => k,
        _ => 2,
    };
    checks.extend(qualification_margins(k)?);
    checks.push(spread_monotone(problem)?);
    checks.push(link_consistency(problem)?);
    checks.push(inversion_round_trip(problem)?);
    Ok(VerifyReport { checks })
}
