//! Noise-level sweeps and rate certificates.
//!
//! A sweep evaluates the analytic contraction at `alpha(delta)` on a geometric
//! grid of noise levels and fits the slope of `log spc` against `log delta`.
//! Logarithmic rates are certified with bounded ratios instead of slopes.

use crate::calibration::{apriori_alpha, saturation_alpha_with, solve_balance_with, Regime};
use crate::error::{require_positive, Result, SpcError};
use crate::exec::{self, Backend};
use crate::filters::{log_grid, Filter, FilterKind};
use crate::posterior::{self, PosteriorSummary};
use crate::spectrum::{make_truth, Direction, IndexFunction, Smoothness, SpectralProblem, Truth};

pub const MIN_SWEEP_POINTS: usize = 6;
pub const MIN_FIT_POINTS: usize = 3;

/// 13 geometric points on `[1e-6, 1e-2]`.
pub fn default_delta_grid() -> Vec<f64> {
    log_grid(1e-6, 1e-2, 13).expect("static grid")
}

#[derive(Debug, Clone)]
pub enum AlphaRule {
    /// Root of `phi^2(f^2(alpha)) = delta^2 S(alpha)`.
    Balance(IndexFunction),
    Apriori(Regime),
    /// Root of `alpha^2 = delta^2 S(alpha)`.
    Saturation,
    Fixed(f64),
}

impl AlphaRule {
    pub fn alpha(&self, problem: &SpectralProblem, delta: f64) -> Result<f64> {
        self.alpha_with(Backend::default(), problem, delta)
    }

    pub fn alpha_with(&self, backend: Backend, problem: &SpectralProblem, delta: f64) -> Result<f64> {
        match self {
            AlphaRule::Balance(phi) => Ok(solve_balance_with(backend, problem, phi, delta)?.alpha_star),
            AlphaRule::Apriori(regime) => apriori_alpha(regime, delta),
            AlphaRule::Saturation => Ok(saturation_alpha_with(backend, problem, delta)?.alpha_star),
            AlphaRule::Fixed(alpha) => {
                require_positive("alpha", *alpha)?;
                Ok(*alpha)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlphaRule::Balance(_) => "balance",
            AlphaRule::Apriori(_) => "apriori",
            AlphaRule::Saturation => "saturation",
            AlphaRule::Fixed(_) => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub alpha: f64,
    pub bias_sq: f64,
    pub est_var: f64,
    pub spread: f64,
    pub spc: f64,
}

impl From<PosteriorSummary> for SweepRow {
    fn from(s: PosteriorSummary) -> Self {
        Self {
            delta: s.delta,
            alpha: s.alpha,
            bias_sq: s.bias_sq,
            est_var: s.est_var,
            spread: s.spread,
            spc: s.spc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Descending in `delta`.
    pub rows: Vec<SweepRow>,
    pub fitted_exponent: f64,
    pub fit_r2: f64,
    pub theory_exponent: Option<f64>,
    pub log_factor_ratio_band: Option<(f64, f64)>,
}

impl SweepResult {
    pub fn from_rows(rows: Vec<SweepRow>) -> Result<Self> {
        let (fitted_exponent, fit_r2) = fit_loglog(&rows)?;
        Ok(Self {
            rows,
            fitted_exponent,
            fit_r2,
            theory_exponent: None,
            log_factor_ratio_band: None,
        })
    }

    pub fn with_theory(mut self, exponent: f64) -> Self {
        self.theory_exponent = Some(exponent);
        self
    }

    /// Attaches the ratio band of `spc / compensator` over the rows.
    pub fn with_band<C: Fn(f64) -> f64>(mut self, compensator: C) -> Result<Self> {
        self.log_factor_ratio_band = Some(log_factor_band(&self.rows, compensator)?);
        Ok(self)
    }

    pub fn min_alpha(&self) -> f64 {
        self.rows.iter().map(|r| r.alpha).fold(f64::INFINITY, f64::min)
    }
}

/// Sorts a noise grid into descending order after checking it is geometric,
/// has at least `MIN_SWEEP_POINTS` points and lies in `(0, 1)`.
pub fn check_delta_grid(deltas: &[f64]) -> Result<Vec<f64>> {
    if deltas.len() < MIN_SWEEP_POINTS {
        return Err(SpcError::invalid(
            "delta_grid",
            format!("need at least {MIN_SWEEP_POINTS} points, got {}", deltas.len()),
        ));
    }
    if let Some(d) = deltas.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        return Err(SpcError::invalid("delta_grid", format!("values must lie in (0, 1), got {d}")));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let steps: Vec<f64> = sorted.windows(2).map(|w| (w[0] / w[1]).ln()).collect();
    let step = steps[0];
    if step <= 0.0 || steps.iter().any(|s| (s - step).abs() > 1e-9 * step.max(1.0)) {
        return Err(SpcError::invalid("delta_grid", "points must be distinct and geometrically spaced"));
    }
    Ok(sorted)
}

pub fn run_sweep(
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    rule: &AlphaRule,
    deltas: &[f64],
) -> Result<SweepResult> {
    run_sweep_with(Backend::default(), problem, truth, filter, rule, deltas)
}

/// Evaluates `spc(delta, alpha(delta))` on the grid, rows in parallel.
pub fn run_sweep_with(
    backend: Backend,
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    rule: &AlphaRule,
    deltas: &[f64],
) -> Result<SweepResult> {
    let rows = sweep_rows(backend, problem, truth, filter, rule, &check_delta_grid(deltas)?)?;
    SweepResult::from_rows(rows)
}

/// Rows for an arbitrary list of noise levels, in the given order.
pub fn sweep_rows(
    backend: Backend,
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    rule: &AlphaRule,
    deltas: &[f64],
) -> Result<Vec<SweepRow>> {
    let results = exec::map_indexed_with(backend, deltas.len(), |i| {
        let delta = deltas[i];
        rule.alpha_with(backend, problem, delta)
            .and_then(|alpha| posterior::spc_with(backend, problem, truth, filter, alpha, delta))
            .map(SweepRow::from)
            .map_err(|e| SpcError::RowFailed {
                delta,
                source: Box::new(e),
            })
    });
    results.into_iter().collect()
}

/// Least-squares slope of `ln y` on `ln x` and its coefficient of determination.
pub fn fit_power(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < MIN_FIT_POINTS {
        return Err(SpcError::invalid(
            "rows",
            format!("need at least {MIN_FIT_POINTS} paired points, got {}", xs.len().min(ys.len())),
        ));
    }
    if let Some(v) = xs.iter().chain(ys).find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(SpcError::invalid("rows", format!("log-log fit needs positive values, got {v}")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = exec::compensated_sum_rev(&lx) / n;
    let my = exec::compensated_sum_rev(&ly) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(SpcError::Degenerate("all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok((slope, r2))
}

/// Slope of `ln spc` against `ln delta`.
pub fn fit_loglog(rows: &[SweepRow]) -> Result<(f64, f64)> {
    let xs: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.spc).collect();
    fit_power(&xs, &ys)
}

/// `(min, max)` of `spc(delta) / compensator(delta)` over the rows.
pub fn log_factor_band<C: Fn(f64) -> f64>(rows: &[SweepRow], compensator: C) -> Result<(f64, f64)> {
    if rows.is_empty() {
        return Err(SpcError::invalid("rows", "empty"));
    }
    let mut band = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        let c = compensator(r.delta);
        if !(c > 0.0 && c.is_finite()) {
            return Err(SpcError::invalid(
                "compensator",
                format!("must be positive, got {c} at delta = {:e}", r.delta),
            ));
        }
        let q = r.spc / c;
        band = (band.0.min(q), band.1.max(q));
    }
    Ok(band)
}

/// Largest smoothness the preconditioner can exploit for a polynomial
/// operator, `D = 1+2a+2p`: `D` without preconditioning, `(k+1) D` for
/// `k`-fold Tikhonov, unbounded for cut-off.
pub fn saturation_cap(kind: FilterKind, d: f64) -> f64 {
    match kind {
        FilterKind::None => d,
        FilterKind::Tikhonov => 2.0 * d,
        FilterKind::KFold(k) => (k as f64 + 1.0) * d,
        FilterKind::Cutoff => f64::INFINITY,
    }
}

/// Theoretical SPC exponent for the polynomial operator with Sobolev truth.
pub fn moderate_sobolev_exponent(a: f64, p: f64, beta: f64, kind: FilterKind) -> f64 {
    let d = 1.0 + 2.0 * a + 2.0 * p;
    let b = beta.min(saturation_cap(kind, d));
    4.0 * b / (1.0 + 2.0 * b + 2.0 * p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure1Row {
    pub beta: f64,
    pub filter: FilterKind,
    pub fitted_exponent: f64,
    pub fit_r2: f64,
    pub theory_exponent: f64,
}

/// Fitted and theoretical SPC exponents over `betas x filters` for a
/// polynomial problem, each sweep using the a-priori rule of the smoothness
/// the filter can exploit.
pub fn figure1_exponents(
    problem: &SpectralProblem,
    betas: &[f64],
    filters: &[Filter],
    deltas: &[f64],
) -> Result<Vec<Figure1Row>> {
    let crate::spectrum::Family::ModeratePoly { a, p } = problem.family() else {
        return Err(SpcError::Unsupported("exponent table needs a polynomial operator".into()));
    };
    let d = 1.0 + 2.0 * a + 2.0 * p;
    let mut out = Vec::with_capacity(betas.len() * filters.len());
    for &beta in betas {
        require_positive("beta", beta)?;
        let truth = make_truth(problem, Smoothness::Sobolev(beta), &Direction::Default)?;
        for filter in filters {
            let beta_eff = beta.min(saturation_cap(filter.kind(), d));
            let rule = AlphaRule::Apriori(Regime::ModSobolev { a, p, beta: beta_eff });
            let sweep = run_sweep(problem, &truth, filter, &rule, deltas)?;
            out.push(Figure1Row {
                beta,
                filter: filter.kind(),
                fitted_exponent: sweep.fitted_exponent,
                fit_r2: sweep.fit_r2,
                theory_exponent: moderate_sobolev_exponent(a, p, beta, filter.kind()),
            });
        }
    }
    Ok(out)
}
