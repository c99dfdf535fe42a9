//! Regularization filters `g_alpha` and residuals `r_alpha = 1 - t g_alpha`.
//!
//! The filter decides how the prior center is computed from the data. `None`
//! keeps the prior centered (`g = 0`, and by convention `r = 1`).

use std::fmt;
use std::str::FromStr;

use crate::error::{require_positive, Result, SpcError};
use crate::spectrum::IndexFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    None,
    Tikhonov,
    KFold(u32),
    Cutoff,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterKind::None => f.write_str("none"),
            FilterKind::Tikhonov => f.write_str("tikhonov"),
            FilterKind::KFold(k) => write!(f, "kfold:{k}"),
            FilterKind::Cutoff => f.write_str("cutoff"),
        }
    }
}

impl FromStr for FilterKind {
    type Err = SpcError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "none" => Ok(FilterKind::None),
            "tikhonov" => Ok(FilterKind::Tikhonov),
            "cutoff" => Ok(FilterKind::Cutoff),
            _ => match s.strip_prefix("kfold:") {
                Some(k) => match k.parse::<u32>() {
                    Ok(k) if k >= 1 => Ok(FilterKind::KFold(k)),
                    _ => Err(SpcError::invalid("filter", format!("bad k in `{s}`; need an integer >= 1"))),
                },
                None => Err(SpcError::invalid(
                    "filter",
                    format!("unknown filter `{s}`; expected none | tikhonov | kfold:<k> | cutoff"),
                )),
            },
        }
    }
}

/// A regularization filter together with its constants: `|r| <= gamma0` and
/// `|g| <= gamma_star / alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filter {
    kind: FilterKind,
    gamma0: f64,
    gamma_star: f64,
}

impl Filter {
    /// Shipped constants, each confirmed on a grid of `t/alpha` before use.
    pub fn new(kind: FilterKind) -> Result<Self> {
        let gamma_star = match kind {
            FilterKind::None => 0.0,
            FilterKind::Tikhonov | FilterKind::Cutoff => 1.0,
            FilterKind::KFold(0) => return Err(SpcError::invalid("filter", "kfold needs k >= 1")),
            FilterKind::KFold(k) => k as f64,
        };
        let filter = Self { kind, gamma0: 1.0, gamma_star };
        filter.verify_constants()?;
        Ok(filter)
    }

    pub fn none() -> Self {
        Self { kind: FilterKind::None, gamma0: 1.0, gamma_star: 0.0 }
    }

    pub fn tikhonov() -> Self {
        Self { kind: FilterKind::Tikhonov, gamma0: 1.0, gamma_star: 1.0 }
    }

    pub fn cutoff() -> Self {
        Self { kind: FilterKind::Cutoff, gamma0: 1.0, gamma_star: 1.0 }
    }

    pub fn kfold(k: u32) -> Result<Self> {
        Self::new(FilterKind::KFold(k))
    }

    /// Replaces `gamma_star` without verification; only meant for exercising
    /// failure paths of the property suite.
    pub fn with_gamma_star_unchecked(mut self, gamma_star: f64) -> Self {
        self.gamma_star = gamma_star;
        self
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn gamma_star(&self) -> f64 {
        self.gamma_star
    }

    /// For every kind here `alpha g_alpha(t)` and `r_alpha(t)` depend on `t/alpha` only,
    /// so one sweep over the ratio covers all `alpha`.
    fn verify_constants(&self) -> Result<()> {
        for u in log_grid(1e-12, 1e12, 2401)? {
            let (ag, r) = (self.alpha_g_unchecked(1.0, u), self.r_unchecked(1.0, u));
            if ag.abs() > self.gamma_star * (1.0 + 1e-12) || r.abs() > self.gamma0 * (1.0 + 1e-12) {
                return Err(SpcError::invalid(
                    "filter",
                    format!("{} violates its constants at t/alpha = {u:e}", self.kind),
                ));
            }
        }
        Ok(())
    }

    /// `g_alpha(t)`, for `alpha > 0`, `t > 0`.
    pub fn g(&self, alpha: f64, t: f64) -> Result<f64> {
        check_alpha_t(alpha, t)?;
        Ok(self.g_unchecked(alpha, t))
    }

    /// `r_alpha(t) = 1 - t g_alpha(t)`.
    pub fn r(&self, alpha: f64, t: f64) -> Result<f64> {
        check_alpha_t(alpha, t)?;
        Ok(self.r_unchecked(alpha, t))
    }

    /// `g_alpha(t)` extended continuously to `t = 0` where the kind allows.
    pub(crate) fn g_unchecked(&self, alpha: f64, t: f64) -> f64 {
        self.alpha_g_unchecked(alpha, t) / alpha
    }

    /// `alpha g_alpha(t)`, computed without cancellation for small `t/alpha`.
    pub(crate) fn alpha_g_unchecked(&self, alpha: f64, t: f64) -> f64 {
        match self.kind {
            FilterKind::None => 0.0,
            FilterKind::Tikhonov => alpha / (alpha + t),
            FilterKind::KFold(k) => {
                let u = t / alpha;
                if u == 0.0 {
                    k as f64
                } else {
                    -(-(k as f64) * u.ln_1p()).exp_m1() / u
                }
            }
            FilterKind::Cutoff => {
                if t >= alpha {
                    alpha / t
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn r_unchecked(&self, alpha: f64, t: f64) -> f64 {
        match self.kind {
            FilterKind::None => 1.0,
            FilterKind::Tikhonov => alpha / (alpha + t),
            FilterKind::KFold(k) => (-(k as f64) * (t / alpha).ln_1p()).exp(),
            FilterKind::Cutoff => {
                if t < alpha {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

impl FromStr for Filter {
    type Err = SpcError;

    fn from_str(s: &str) -> Result<Self> {
        Filter::new(s.parse()?)
    }
}

fn check_alpha_t(alpha: f64, t: f64) -> Result<()> {
    require_positive("alpha", alpha)?;
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(SpcError::OutOfDomain { what: "filter", value: t })
    }
}

/// Residual of the Tikhonov step built into every Gaussian posterior mean.
pub fn s_tikhonov(alpha: f64, t: f64) -> Result<f64> {
    require_positive("alpha", alpha)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(SpcError::OutOfDomain { what: "s_alpha", value: t });
    }
    Ok(alpha / (alpha + t))
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    require_positive("grid lower end", lo)?;
    require_positive("grid upper end", hi)?;
    if points == 0 {
        return Err(SpcError::invalid("grid", "needs at least one point"));
    }
    if hi < lo {
        return Err(SpcError::invalid("grid", format!("upper end {hi:e} below lower end {lo:e}")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    let step = (l1 - l0) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| match i {
            0 => lo,
            i if i == points - 1 => hi,
            i => (l0 + step * i as f64).exp(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    fn of(grid: &[f64]) -> Self {
        let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { lo, hi, points: grid.len() }
    }
}

/// Relative slack allowed on a claimed qualification constant.
pub const QUALIFICATION_SLACK: f64 = 1e-3;

/// Grid certificate for `|r_alpha(t)| phi(t) <= gamma phi(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualificationReport {
    pub margin: f64,
    pub alpha_grid: GridSpec,
    pub t_grid: GridSpec,
    pub gamma_claimed: f64,
    pub slack: f64,
    pub passed: bool,
}

pub fn check_qualification(
    filter: &Filter,
    phi: &IndexFunction,
    gamma_claimed: f64,
    alpha_grid: &[f64],
    t_grid: &[f64],
) -> Result<QualificationReport> {
    if alpha_grid.is_empty() || t_grid.is_empty() {
        return Err(SpcError::invalid("grid", "qualification grids must be non-empty"));
    }
    let mut margin: f64 = 0.0;
    for &alpha in alpha_grid {
        let ln_phi_alpha = phi.ln_eval(alpha)?;
        for &t in t_grid {
            let r = filter.r(alpha, t)?.abs();
            if r == 0.0 {
                continue;
            }
            let v = (r.ln() + phi.ln_eval(t)? - ln_phi_alpha).exp();
            margin = margin.max(v);
        }
    }
    Ok(QualificationReport {
        margin,
        alpha_grid: GridSpec::of(alpha_grid),
        t_grid: GridSpec::of(t_grid),
        gamma_claimed,
        slack: QUALIFICATION_SLACK,
        passed: margin <= gamma_claimed * (1.0 + QUALIFICATION_SLACK),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_filters() -> Vec<Filter> {
        vec![
            Filter::none(),
            Filter::tikhonov(),
            Filter::kfold(1).unwrap(),
            Filter::kfold(2).unwrap(),
            Filter::kfold(5).unwrap(),
            Filter::cutoff(),
        ]
    }

    #[test]
    fn filter_examples() {
        assert_eq!(Filter::tikhonov().g(1.0, 1.0).unwrap(), 0.5);
        assert!((Filter::kfold(2).unwrap().g(1.0, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(Filter::cutoff().g(0.5, 0.25).unwrap(), 0.0);
        assert_eq!(Filter::cutoff().g(0.5, 0.5).unwrap(), 2.0);
        assert_eq!(Filter::none().g(0.3, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn residual_examples() {
        assert_eq!(Filter::none().r(0.1, 0.9).unwrap(), 1.0);
        assert!((Filter::kfold(3).unwrap().r(1.0, 1.0).unwrap() - 0.125).abs() < 1e-15);
        assert!((Filter::tikhonov().r(2.0, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(Filter::cutoff().r(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(Filter::cutoff().r(0.5, 0.4).unwrap(), 1.0);
    }

    #[test]
    fn s_examples() {
        assert_eq!(s_tikhonov(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(s_tikhonov(1.0, 1.0).unwrap(), 0.5);
        assert!((s_tikhonov(1e-6, 1.0).unwrap() / 1e-6 - 1.0).abs() < 2e-6);
        assert!(s_tikhonov(0.0, 1.0).is_err());
    }

    #[test]
    fn domain_errors() {
        let f = Filter::tikhonov();
        assert!(f.g(0.0, 1.0).is_err());
        assert!(f.g(1.0, 0.0).is_err());
        assert!(f.r(-1.0, 1.0).is_err());
        assert!(f.r(1.0, f64::NAN).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("none".parse::<FilterKind>().unwrap(), FilterKind::None);
        assert_eq!("kfold:3".parse::<FilterKind>().unwrap(), FilterKind::KFold(3));
        assert_eq!("Cutoff".parse::<FilterKind>().unwrap(), FilterKind::Cutoff);
        assert!("kfold:0".parse::<FilterKind>().is_err());
        assert!("landweber".parse::<FilterKind>().is_err());
        assert_eq!(FilterKind::KFold(2).to_string(), "kfold:2");
    }

    #[test]
    fn shipped_constants() {
        assert_eq!(Filter::new(FilterKind::KFold(4)).unwrap().gamma_star(), 4.0);
        for f in all_filters() {
            assert_eq!(f.gamma0(), 1.0);
        }
        assert_eq!(Filter::none().gamma_star(), 0.0);
    }

    #[test]
    fn definition_bounds_on_grid() {
        let alphas = log_grid(1e-10, 1.0, 60).unwrap();
        let ts = log_grid(1e-14, 1.0, 80).unwrap();
        for f in all_filters() {
            for &a in &alphas {
                for &t in &ts {
                    let (g, r) = (f.g(a, t).unwrap(), f.r(a, t).unwrap());
                    assert!(r.abs() <= f.gamma0() * (1.0 + 1e-14));
                    assert!(g.abs() <= f.gamma_star() / a * (1.0 + 1e-12), "{f} a={a} t={t}");
                    if f.kind() != FilterKind::None {
                        assert!((r - (1.0 - t * g)).abs() <= 1e-14, "{f} a={a} t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn residual_vanishes_as_alpha_shrinks() {
        for t in [1e-8, 1e-3, 1.0] {
            let a = 1e-6 * t;
            assert!(Filter::tikhonov().r(a, t).unwrap() <= 1e-3);
            assert!(Filter::kfold(2).unwrap().r(a, t).unwrap() <= 1e-3);
            assert_eq!(Filter::cutoff().r(a, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn compound_qualification_raise() {
        let alphas = log_grid(1e-8, 1.0, 80).unwrap();
        let ts = log_grid(1e-8, 1.0, 80).unwrap();
        for k in 1..=4u32 {
            let f = Filter::kfold(k).unwrap();
            for &a in &alphas {
                for &t in &ts {
                    let lhs = (f.r(a, t).unwrap() * s_tikhonov(a, t).unwrap()).abs()
                        * t.powi(k as i32 + 1);
                    assert!(lhs <= a.powi(k as i32 + 1) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn qualification_reports() {
        let grid = log_grid(1e-8, 1.0, 200).unwrap();
        let lin = IndexFunction::power(1.0).unwrap();
        let rep = check_qualification(&Filter::tikhonov(), &lin, 1.0, &grid, &grid).unwrap();
        assert!(rep.passed && rep.margin <= 1.0);
        let expo = IndexFunction::exp_type(3.0, 1.0).unwrap();
        let rep = check_qualification(&Filter::cutoff(), &expo, 1.0, &grid, &grid).unwrap();
        assert!(rep.passed && rep.margin <= 1.0);
        let rep = check_qualification(&Filter::none(), &lin, 1.0, &grid, &grid).unwrap();
        assert!(!rep.passed);
        assert!((rep.margin - 1.0 / 1e-8).abs() / 1e8 < 1e-9);
        assert_eq!(rep.alpha_grid.points, 200);
        assert!(check_qualification(&Filter::none(), &lin, 1.0, &[], &grid).is_err());
    }

    #[test]
    fn kfold_small_ratio_is_stable() {
        let f = Filter::kfold(3).unwrap();
        let g = f.g(1.0, 1e-300).unwrap();
        assert!((g - 3.0).abs() < 1e-12);
        assert_eq!(f.alpha_g_unchecked(1.0, 0.0), 3.0);
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = log_grid(1e-6, 1e-2, 13).unwrap();
        assert_eq!(g[0], 1e-6);
        assert_eq!(g[12], 1e-2);
        assert!((g[6] - 1e-4).abs() < 1e-18);
        assert!(log_grid(1.0, 0.1, 3).is_err());
    }
}
