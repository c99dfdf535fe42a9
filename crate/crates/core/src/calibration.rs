//! Choice of the regularization parameter.
//!
//! The balance equation `phi^2(f^2(alpha)) = delta^2 S(alpha)` has a strictly
//! increasing left-minus-right difference in `log alpha`, so it is solved by
//! bisection in log space after a geometric bracket search. The same solver
//! handles the saturation rule `alpha^2 = delta^2 S(alpha)` and arbitrary
//! monotone crossings supplied directly by the caller.

use crate::error::{require_positive, Result, SpcError};
use crate::exec::Backend;
use crate::filters::{check_qualification, log_grid, Filter};
use crate::posterior;
use crate::spectrum::{Family, IndexFunction, SpectralProblem};

pub const ALPHA_FLOOR: f64 = 1e-30;
pub const ALPHA_CEIL: f64 = 1e6;
/// Largest accepted `|lhs - rhs| / max(lhs, rhs)` at the returned root.
pub const BALANCE_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 400;
/// Points of the log grid on which sign changes of the difference are counted.
pub const SIGN_GRID: usize = 64;

const STOP_TOL: f64 = 1e-12;
const EXPANSION: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceSolution {
    pub alpha_star: f64,
    pub lhs_value: f64,
    pub rhs_value: f64,
    pub residual_rel: f64,
    pub iterations: usize,
    /// Sign changes of `lhs - rhs` on a log grid spanning the searched bracket.
    pub sign_changes: usize,
}

fn rel_from_ln(diff: f64) -> f64 {
    -(-diff.abs()).exp_m1()
}

/// Root of `ln_lhs(alpha) = ln_rhs(alpha)` for a non-decreasing left side and a
/// strictly decreasing right side, searched from `alpha0` within
/// `[ALPHA_FLOOR, ALPHA_CEIL]`.
pub fn solve_log_crossing<L, R>(ln_lhs: L, ln_rhs: R, alpha0: f64) -> Result<BalanceSolution>
where
    L: Fn(f64) -> Result<f64>,
    R: Fn(f64) -> Result<f64>,
{
    require_positive("alpha0", alpha0)?;
    let h = |alpha: f64| -> Result<f64> {
        let d = ln_lhs(alpha)? - ln_rhs(alpha)?;
        if d.is_nan() {
            return Err(SpcError::Degenerate(format!("balance difference undefined at alpha = {alpha:e}")));
        }
        Ok(d)
    };

    let start = alpha0.clamp(ALPHA_FLOOR, ALPHA_CEIL);
    let h0 = h(start)?;
    if h0 == 0.0 {
        return finish(&ln_lhs, &ln_rhs, start, 0, start, start);
    }
    let (mut lo, mut hi) = (start, start);
    if h0 < 0.0 {
        loop {
            if hi >= ALPHA_CEIL {
                return Err(SpcError::BracketExhausted { lo: start, hi: ALPHA_CEIL });
            }
            lo = hi;
            hi = (hi * EXPANSION).min(ALPHA_CEIL);
            if h(hi)? >= 0.0 {
                break;
            }
        }
    } else {
        loop {
            if lo <= ALPHA_FLOOR {
                return Err(SpcError::BracketExhausted { lo: ALPHA_FLOOR, hi: start });
            }
            hi = lo;
            lo = (lo / EXPANSION).max(ALPHA_FLOOR);
            if h(lo)? <= 0.0 {
                break;
            }
        }
    }
    let (search_lo, search_hi) = (lo.min(start), hi.max(start));

    let (mut ln_lo, mut ln_hi) = (lo.ln(), hi.ln());
    let (mut h_lo, mut h_hi) = (h(lo)?, h(hi)?);
    let mut iterations = 0;
    while iterations < MAX_ITER {
        if rel_from_ln(h_lo) <= STOP_TOL || rel_from_ln(h_hi) <= STOP_TOL {
            break;
        }
        let mid = 0.5 * (ln_lo + ln_hi);
        if mid <= ln_lo || mid >= ln_hi {
            break;
        }
        iterations += 1;
        let hm = h(mid.exp())?;
        if hm < 0.0 {
            ln_lo = mid;
            h_lo = hm;
        } else {
            ln_hi = mid;
            h_hi = hm;
        }
    }
    let alpha = if h_lo.abs() <= h_hi.abs() { ln_lo.exp() } else { ln_hi.exp() };
    finish(&ln_lhs, &ln_rhs, alpha, iterations, search_lo, search_hi)
}

fn finish<L, R>(ln_lhs: &L, ln_rhs: &R, alpha: f64, iterations: usize, lo: f64, hi: f64) -> Result<BalanceSolution>
where
    L: Fn(f64) -> Result<f64>,
    R: Fn(f64) -> Result<f64>,
{
    let (l, r) = (ln_lhs(alpha)?, ln_rhs(alpha)?);
    let residual_rel = rel_from_ln(l - r);
    if !(residual_rel <= BALANCE_TOL) {
        return Err(SpcError::Degenerate(format!(
            "balance residual {residual_rel:e} above {BALANCE_TOL:e} at alpha = {alpha:e}"
        )));
    }
    let (glo, ghi) = if hi / lo < 10.0 { (lo / 10.0, hi * 10.0) } else { (lo, hi) };
    let glo = glo.max(ALPHA_FLOOR);
    let ghi = ghi.min(ALPHA_CEIL);
    let mut sign_changes = 0;
    let mut prev: Option<bool> = None;
    for a in log_grid(glo, ghi, SIGN_GRID)? {
        let d = ln_lhs(a)? - ln_rhs(a)?;
        if d == 0.0 || d.is_nan() {
            continue;
        }
        let pos = d > 0.0;
        if prev.is_some_and(|p| p != pos) {
            sign_changes += 1;
        }
        prev = Some(pos);
    }
    Ok(BalanceSolution {
        alpha_star: alpha,
        lhs_value: l.exp(),
        rhs_value: r.exp(),
        residual_rel,
        iterations,
        sign_changes,
    })
}

/// Crossing of two positive functions given directly.
pub fn solve_crossing<L, R>(lhs: L, rhs: R, alpha0: f64) -> Result<BalanceSolution>
where
    L: Fn(f64) -> f64,
    R: Fn(f64) -> f64,
{
    solve_log_crossing(|a| Ok(lhs(a).ln()), |a| Ok(rhs(a).ln()), alpha0)
}

/// Solves `phi^2(f^2(alpha)) = delta^2 S(alpha)`.
pub fn solve_balance(problem: &SpectralProblem, phi: &IndexFunction, delta: f64) -> Result<BalanceSolution> {
    solve_balance_with(Backend::default(), problem, phi, delta)
}

pub fn solve_balance_with(
    backend: Backend,
    problem: &SpectralProblem,
    phi: &IndexFunction,
    delta: f64,
) -> Result<BalanceSolution> {
    require_positive("delta", delta)?;
    let ln_d2 = 2.0 * delta.ln();
    solve_log_crossing(
        |a| Ok(2.0 * phi.ln_eval(problem.f_squared(a)?)?),
        |a| Ok(ln_d2 + posterior::net_spread_with(backend, problem, a)?.ln()),
        delta * delta,
    )
}

/// Solves `alpha^2 = delta^2 S(alpha)`.
pub fn saturation_alpha(problem: &SpectralProblem, delta: f64) -> Result<BalanceSolution> {
    saturation_alpha_with(Backend::default(), problem, delta)
}

pub fn saturation_alpha_with(backend: Backend, problem: &SpectralProblem, delta: f64) -> Result<BalanceSolution> {
    require_positive("delta", delta)?;
    let ln_d2 = 2.0 * delta.ln();
    solve_log_crossing(
        |a| Ok(2.0 * a.ln()),
        |a| Ok(ln_d2 + posterior::net_spread_with(backend, problem, a)?.ln()),
        delta * delta,
    )
}

/// Saturation rule for a spread function given directly.
pub fn saturation_crossing<S>(spread: S, delta: f64) -> Result<BalanceSolution>
where
    S: Fn(f64) -> f64,
{
    require_positive("delta", delta)?;
    solve_crossing(|a| a * a, |a| delta * delta * spread(a), delta * delta)
}

/// Problem/smoothness pairs with a closed-form a-priori rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Polynomial operator, Sobolev truth: `delta^{2D/(1+2p+2beta)}`, `D = 1+2a+2p`.
    ModSobolev { a: f64, p: f64, beta: f64 },
    /// Exponential operator, Sobolev truth: any `alpha` in
    /// `[delta^2 log(delta^-2)^{(2beta-2a)/b}, delta^{2 sigma}]`.
    SevSobolev { a: f64, b: f64, beta: f64, sigma: f64 },
    /// Polynomial operator, analytic truth: `log(delta^{-1/beta})^{-D}`.
    ModAnalytic { a: f64, p: f64, beta: f64 },
    /// Exponential operator with `b = 1`, analytic truth: `delta^{2q/(beta+q)}`.
    SevAnalytic { q: f64, b: f64, beta: f64 },
}

impl Regime {
    /// Regime matching a named family and smoothness class, when one exists.
    pub fn for_problem(family: Family, analytic: bool, beta: f64, sigma: f64) -> Option<Regime> {
        match (family, analytic) {
            (Family::ModeratePoly { a, p }, false) => Some(Regime::ModSobolev { a, p, beta }),
            (Family::ModeratePoly { a, p }, true) => Some(Regime::ModAnalytic { a, p, beta }),
            (Family::SevereExp { a, b, .. }, false) => Some(Regime::SevSobolev { a, b, beta, sigma }),
            (Family::SevereExp { q, b, .. }, true) => Some(Regime::SevAnalytic { q, b, beta }),
            (Family::Custom, _) => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Regime::ModSobolev { a, p, beta } | Regime::ModAnalytic { a, p, beta } => {
                require_positive("a", a)?;
                require_positive("beta", beta)?;
                if !(p.is_finite() && p >= 0.0) {
                    return Err(SpcError::invalid("p", format!("must be finite and >= 0, got {p}")));
                }
            }
            Regime::SevSobolev { a, b, beta, sigma } => {
                require_positive("a", a)?;
                require_positive("b", b)?;
                require_positive("beta", beta)?;
                require_positive("sigma", sigma)?;
            }
            Regime::SevAnalytic { q, b, beta } => {
                require_positive("q", q)?;
                require_positive("beta", beta)?;
                if b != 1.0 {
                    return Err(SpcError::Unsupported(format!(
                        "analytic truth under an exponential operator needs b = 1, got {b}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(SpcError::invalid("delta", format!("must lie in (0, 1), got {delta}")))
    }
}

/// Closed-form `alpha(delta)`; the lower endpoint of the window for `SevSobolev`.
pub fn apriori_alpha(regime: &Regime, delta: f64) -> Result<f64> {
    regime.validate()?;
    check_delta(delta)?;
    Ok(match *regime {
        Regime::ModSobolev { a, p, beta } => {
            let d = 1.0 + 2.0 * a + 2.0 * p;
            delta.powf(2.0 * d / (1.0 + 2.0 * p + 2.0 * beta))
        }
        Regime::SevSobolev { a, b, beta, .. } => {
            delta * delta * (-2.0 * delta.ln()).powf((2.0 * beta - 2.0 * a) / b)
        }
        Regime::ModAnalytic { a, p, beta } => {
            let d = 1.0 + 2.0 * a + 2.0 * p;
            (-delta.ln() / beta).powf(-d)
        }
        Regime::SevAnalytic { q, beta, .. } => delta.powf(2.0 * q / (beta + q)),
    })
}

/// `(lower, upper)` admissible window for `SevSobolev`.
pub fn apriori_window(regime: &Regime, delta: f64) -> Result<(f64, f64)> {
    let lower = apriori_alpha(regime, delta)?;
    match *regime {
        Regime::SevSobolev { sigma, .. } => Ok((lower, delta.powf(2.0 * sigma))),
        _ => Err(SpcError::Unsupported("only the severe/Sobolev rule is a window".into())),
    }
}

/// Whether the bias bound `b(alpha) <= gamma phi(f^2(alpha))` is backed for a
/// given truth smoothness and preconditioning filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateGuarantee {
    /// `phi(f^2(t))/t` is non-increasing: the bound holds for every filter.
    LowSmoothness,
    /// `phi(f^2(t))/t` is an index function and the filter qualifies for it on the grid.
    Qualified { margin: f64 },
    /// Neither could be established; the solver still runs but nothing is claimed.
    Unverified,
}

impl RateGuarantee {
    pub fn is_claimed(&self) -> bool {
        !matches!(self, RateGuarantee::Unverified)
    }

    pub fn label(&self) -> &'static str {
        match self {
            RateGuarantee::LowSmoothness => "low-smoothness",
            RateGuarantee::Qualified { .. } => "qualified",
            RateGuarantee::Unverified => "unverified",
        }
    }
}

const GUARANTEE_GRID: usize = 48;

/// Checks the guarantee on a log grid over `[alpha_lo, lambda_1]`.
pub fn rate_guarantee(
    problem: &SpectralProblem,
    phi: &IndexFunction,
    filter: &Filter,
    alpha_lo: f64,
) -> Result<RateGuarantee> {
    require_positive("alpha_lo", alpha_lo)?;
    if matches!(problem.family(), Family::Custom) {
        return Ok(RateGuarantee::Unverified);
    }
    let hi = problem.lambda_max();
    if alpha_lo >= hi {
        return Err(SpcError::invalid("alpha_lo", format!("must be below lambda_1 = {hi:e}")));
    }
    let grid = log_grid(alpha_lo, hi, GUARANTEE_GRID)?;
    let mut ln_rho = Vec::with_capacity(grid.len());
    for &t in &grid {
        ln_rho.push(phi.ln_eval(problem.f_squared(t)?)? - t.ln());
    }
    let slack = 1e-12;
    if ln_rho.windows(2).all(|w| w[1] <= w[0] + slack * w[0].abs().max(1.0)) {
        return Ok(RateGuarantee::LowSmoothness);
    }
    if !ln_rho.windows(2).all(|w| w[1] >= w[0] - slack * w[0].abs().max(1.0)) {
        return Ok(RateGuarantee::Unverified);
    }
    let link = SpectralProblem::from_family(problem.family(), 2)?;
    let phi = phi.clone();
    let rho = IndexFunction::from_ln(
        "phi(f^2(t))/t",
        move |t| match link.f_squared(t).and_then(|s| phi.ln_eval(s)) {
            Ok(v) => v - t.ln(),
            Err(_) => f64::NAN,
        },
        f64::INFINITY,
    );
    let report = check_qualification(filter, &rho, 1.0, &grid, &grid)?;
    Ok(if report.passed && report.margin.is_finite() {
        RateGuarantee::Qualified { margin: report.margin }
    } else {
        RateGuarantee::Unverified
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moderate(n: usize) -> SpectralProblem {
        SpectralProblem::from_family(Family::ModeratePoly { a: 0.5, p: 1.0 }, n).unwrap()
    }

    #[test]
    fn synthetic_crossings() {
        let s = solve_crossing(|a| a, |a| 1.0 / a, 1.0).unwrap();
        assert!((s.alpha_star - 1.0).abs() < 1e-12);
        assert_eq!(s.sign_changes, 1);

        let d: f64 = 1e-4;
        let s = solve_crossing(|a| a * a, |a| d * d * a.powf(-0.75), d * d).unwrap();
        let want = 1e-8f64.powf(4.0 / 11.0);
        assert!((s.alpha_star / want - 1.0).abs() < 1e-8, "{} {want}", s.alpha_star);
        assert!(s.residual_rel <= BALANCE_TOL);
        assert!(s.iterations <= MAX_ITER);
        assert_eq!(s.sign_changes, 1);
    }

    #[test]
    fn synthetic_saturation() {
        let s = saturation_crossing(|a| 1.0 / a, 1.0).unwrap();
        assert!((s.alpha_star - 1.0).abs() < 1e-12);
        let s = saturation_crossing(|a| a.powf(-0.75), 1e-3).unwrap();
        let want = 1e-6f64.powf(4.0 / 11.0);
        assert!((s.alpha_star / want - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bracket_exhaustion() {
        assert!(matches!(
            solve_crossing(|a| a, |a| 1e20 / a, 1.0),
            Err(SpcError::BracketExhausted { .. })
        ));
        assert!(matches!(
            solve_crossing(|a| a, |a| 1e-70 / a, 1.0),
            Err(SpcError::BracketExhausted { .. })
        ));
        let e = solve_crossing(|a| a, |a| 1e20 / a, 1.0).unwrap_err();
        assert!(e.is_numeric_failure());
    }

    #[test]
    fn start_point_is_irrelevant() {
        let a = solve_crossing(|a| a, |a| 4.0 / a, 1e-20).unwrap();
        let b = solve_crossing(|a| a, |a| 4.0 / a, 1e5).unwrap();
        assert!((a.alpha_star - 2.0).abs() < 1e-11);
        assert!((b.alpha_star - 2.0).abs() < 1e-11);
    }

    #[test]
    fn balance_tracks_power_rule() {
        let p = moderate(100_000);
        let phi = IndexFunction::sobolev(0.5, 2.0).unwrap();
        for delta in log_grid(1e-6, 1e-2, 9).unwrap() {
            let s = solve_balance(&p, &phi, delta).unwrap();
            let r = s.alpha_star / delta.powf(8.0 / 7.0);
            assert!((0.5..=2.0).contains(&r), "delta={delta} ratio={r}");
            assert_eq!(s.sign_changes, 1);
            assert!((s.lhs_value / s.rhs_value - 1.0).abs() <= BALANCE_TOL);
        }
    }

    #[test]
    fn balance_is_monotone_in_delta() {
        let p = moderate(20_000);
        for phi in [IndexFunction::sobolev(0.5, 1.0).unwrap(), IndexFunction::analytic(0.5, 1.0).unwrap()] {
            let alphas: Vec<f64> = log_grid(1e-6, 1e-2, 13)
                .unwrap()
                .iter()
                .map(|&d| solve_balance(&p, &phi, d).unwrap().alpha_star)
                .collect();
            assert!(alphas.windows(2).all(|w| w[1] >= w[0]), "{phi:?}");
        }
    }

    #[test]
    fn balance_and_apriori_share_the_power_law() {
        let p = moderate(100_000);
        for beta in [1.0, 2.0, 4.0] {
            let phi = IndexFunction::sobolev(0.5, beta).unwrap();
            let regime = Regime::ModSobolev { a: 0.5, p: 1.0, beta };
            let logs: Vec<f64> = log_grid(1e-6, 1e-2, 9)
                .unwrap()
                .iter()
                .map(|&d| (solve_balance(&p, &phi, d).unwrap().alpha_star / apriori_alpha(&regime, d).unwrap()).ln())
                .collect();
            assert!(logs.iter().all(|l| l.abs() <= 1.5), "beta={beta} {logs:?}");
        }
    }

    #[test]
    fn severe_balance_is_solvable() {
        let p = SpectralProblem::from_family(Family::SevereExp { a: 0.5, q: 1.0, b: 1.0 }, 2000).unwrap();
        let phi = IndexFunction::sobolev(0.5, 1.0).unwrap();
        let s = solve_balance(&p, &phi, 1e-4).unwrap();
        assert_eq!(s.sign_changes, 1);
        let s = saturation_alpha(&p, 1e-4).unwrap();
        assert!(s.alpha_star > 0.0);
    }

    #[test]
    fn saturation_rule_on_moderate_problem() {
        let p = moderate(100_000);
        let s = saturation_alpha(&p, 1e-3).unwrap();
        let spread = posterior::net_spread(&p, s.alpha_star).unwrap();
        assert!((s.alpha_star.powi(2) / (1e-6 * spread) - 1.0).abs() <= BALANCE_TOL);
    }

    #[test]
    fn apriori_examples() {
        let r = Regime::ModSobolev { a: 0.5, p: 1.0, beta: 2.0 };
        let v = apriori_alpha(&r, 0.1).unwrap();
        assert!((v - 0.1f64.powf(8.0 / 7.0)).abs() < 1e-15);
        assert!((v - 0.071969).abs() < 1e-6);

        let r = Regime::SevAnalytic { q: 1.0, b: 1.0, beta: 1.0 };
        assert!((apriori_alpha(&r, 0.01).unwrap() - 0.01).abs() < 1e-17);

        let r = Regime::ModAnalytic { a: 0.5, p: 1.0, beta: 1.0 };
        assert!((apriori_alpha(&r, (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-14);

        let r = Regime::SevSobolev { a: 0.5, b: 1.0, beta: 1.0, sigma: 0.5 };
        let d: f64 = 1e-3;
        let lower = apriori_alpha(&r, d).unwrap();
        assert!((lower / (d * d * (-2.0 * d.ln())) - 1.0).abs() < 1e-14);
        let (lo, hi) = apriori_window(&r, d).unwrap();
        assert_eq!(lo, lower);
        assert!((hi - 1e-3).abs() < 1e-17);
    }

    #[test]
    fn apriori_rejections() {
        let r = Regime::ModSobolev { a: 0.5, p: 1.0, beta: 2.0 };
        assert!(apriori_alpha(&r, 1.0).is_err());
        assert!(apriori_alpha(&r, 0.0).is_err());
        assert!(apriori_alpha(&Regime::ModSobolev { a: 0.5, p: 1.0, beta: -1.0 }, 0.1).is_err());
        assert!(matches!(
            apriori_alpha(&Regime::SevAnalytic { q: 1.0, b: 2.0, beta: 1.0 }, 0.1),
            Err(SpcError::Unsupported(_))
        ));
        assert!(apriori_window(&r, 0.1).is_err());
    }

    #[test]
    fn regime_lookup() {
        let m = Family::ModeratePoly { a: 0.5, p: 1.0 };
        assert_eq!(
            Regime::for_problem(m, false, 2.0, 1.0),
            Some(Regime::ModSobolev { a: 0.5, p: 1.0, beta: 2.0 })
        );
        assert!(Regime::for_problem(Family::Custom, false, 2.0, 1.0).is_none());
    }

    #[test]
    fn guarantee_flags() {
        let p = moderate(1000);
        let lo = 1e-8;
        let low = IndexFunction::sobolev(0.5, 2.0).unwrap();
        assert_eq!(rate_guarantee(&p, &low, &Filter::none(), lo).unwrap(), RateGuarantee::LowSmoothness);
        let high = IndexFunction::sobolev(0.5, 6.0).unwrap();
        assert_eq!(rate_guarantee(&p, &high, &Filter::none(), lo).unwrap(), RateGuarantee::Unverified);
        assert!(matches!(
            rate_guarantee(&p, &high, &Filter::cutoff(), lo).unwrap(),
            RateGuarantee::Qualified { .. }
        ));
        assert!(matches!(
            rate_guarantee(&p, &high, &Filter::kfold(1).unwrap(), lo).unwrap(),
            RateGuarantee::Qualified { .. }
        ));
        let custom = SpectralProblem::from_sequences(vec![1.0, 0.5], vec![1.0, 0.5]).unwrap();
        assert_eq!(rate_guarantee(&custom, &low, &Filter::none(), lo).unwrap(), RateGuarantee::Unverified);
    }
}
