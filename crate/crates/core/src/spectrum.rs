//! The simultaneously diagonalized problem.
//!
//! Prior covariance `C0` and `T*T` share an eigenbasis, so the whole model is
//! described by two eigenvalue sequences: `c_j` for `C0` and `tau_j` for
//! `T*T`. Their product `lambda_j = c_j * tau_j` is the spectrum of `B*B`
//! with `B = T C0^{1/2}`. For the named families the link function
//! `psi^2(C0) = T*T` is known in closed form, which gives the benchmark
//! smoothness `Theta^2(t) = t psi^2(t)` and its inverse `f^2`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{require_positive, Result, SpcError};
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `c_j = j^{-(1+2a)}`, `tau_j = j^{-2p}`.
    ModeratePoly { a: f64, p: f64 },
    /// `c_j = j^{-(1+2a)}`, `tau_j = exp(-2q j^b)`.
    SevereExp { a: f64, q: f64, b: f64 },
    /// Explicit sequences without a known link function.
    Custom,
}

impl Family {
    /// Decay parameter `a` of the prior spectrum, when known.
    pub fn prior_decay(&self) -> Option<f64> {
        match *self {
            Family::ModeratePoly { a, .. } | Family::SevereExp { a, .. } => Some(a),
            Family::Custom => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Family::ModeratePoly { a, p } => {
                require_positive("a", a)?;
                if !(p.is_finite() && p >= 0.0) {
                    return Err(SpcError::invalid("p", format!("must be finite and >= 0, got {p}")));
                }
            }
            Family::SevereExp { a, q, b } => {
                require_positive("a", a)?;
                require_positive("q", q)?;
                require_positive("b", b)?;
            }
            Family::Custom => {}
        }
        Ok(())
    }

    fn ln_psi_squared(&self, t: f64) -> f64 {
        match *self {
            Family::ModeratePoly { a, p } => 2.0 * p / (1.0 + 2.0 * a) * t.ln(),
            Family::SevereExp { a, q, b } => -2.0 * q * t.powf(-b / (1.0 + 2.0 * a)),
            Family::Custom => f64::NAN,
        }
    }
}

/// Eigenvalue sequences of a commuting prior/forward pair, truncated to
/// `n` coordinates. Index `i` of every slice is coordinate `j = i + 1`.
#[derive(Debug, Clone)]
pub struct SpectralProblem {
    family: Family,
    c: Vec<f64>,
    tau: Vec<f64>,
    lambda: Vec<f64>,
}

impl SpectralProblem {
    /// Materializes a named family without any truncation check.
    pub fn from_family(family: Family, n_trunc: usize) -> Result<Self> {
        family.validate()?;
        if n_trunc < 2 {
            return Err(SpcError::invalid("n_trunc", format!("must be >= 2, got {n_trunc}")));
        }
        let (a, tau_of): (f64, Box<dyn Fn(f64) -> f64>) = match family {
            Family::ModeratePoly { a, p } => (a, Box::new(move |j: f64| j.powf(-2.0 * p))),
            Family::SevereExp { a, q, b } => (a, Box::new(move |j: f64| (-2.0 * q * j.powf(b)).exp())),
            Family::Custom => {
                return Err(SpcError::invalid(
                    "family",
                    "custom spectra are built with SpectralProblem::from_sequences",
                ))
            }
        };
        let c: Vec<f64> = (1..=n_trunc).map(|j| (j as f64).powf(-(1.0 + 2.0 * a))).collect();
        let tau: Vec<f64> = (1..=n_trunc).map(|j| tau_of(j as f64)).collect();
        let lambda = c.iter().zip(&tau).map(|(c, t)| c * t).collect();
        Ok(Self { family, c, tau, lambda })
    }

    /// Explicit spectra. `c` must be strictly positive, both non-increasing.
    pub fn from_sequences(c: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        if c.is_empty() || c.len() != tau.len() {
            return Err(SpcError::invalid(
                "c/tau",
                format!("need equal non-zero lengths, got {} and {}", c.len(), tau.len()),
            ));
        }
        if c.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(SpcError::invalid("c", "entries must be finite and > 0"));
        }
        if tau.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(SpcError::invalid("tau", "entries must be finite and >= 0"));
        }
        if c.windows(2).any(|w| w[1] > w[0]) {
            return Err(SpcError::invalid("c", "must be non-increasing"));
        }
        if tau.windows(2).any(|w| w[1] > w[0]) {
            return Err(SpcError::invalid("tau", "must be non-increasing"));
        }
        let lambda = c.iter().zip(&tau).map(|(c, t)| c * t).collect();
        Ok(Self { family: Family::Custom, c, tau, lambda })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Largest eigenvalue of `B*B`.
    pub fn lambda_max(&self) -> f64 {
        self.lambda[0]
    }

    /// Upper end of the range on which index functions are evaluated.
    pub fn domain_max(&self) -> f64 {
        self.c[0].max(self.lambda[0])
    }

    /// Smallest strictly positive `lambda_j` (severe spectra underflow to zero).
    pub fn lambda_min_positive(&self) -> f64 {
        self.lambda
            .iter()
            .rev()
            .copied()
            .find(|&l| l > 0.0)
            .unwrap_or(f64::MIN_POSITIVE)
    }

    /// Conservative bound on the spread-sum tail `sum_{j>N} c_j/(alpha+lambda_j)`:
    /// `(1/alpha) * N^{-2a}/(2a)` by integral comparison. `None` for custom spectra.
    pub fn spread_tail_bound(&self, alpha: f64) -> Option<f64> {
        let a = self.family.prior_decay()?;
        let n = self.n() as f64;
        Some(n.powf(-2.0 * a) / (2.0 * a) / alpha)
    }

    /// Relative spread-sum tail at `alpha`; errors if it exceeds `tol`.
    pub fn check_tail(&self, alpha: f64, tol: f64) -> Result<f64> {
        require_positive("alpha_min", alpha)?;
        require_positive("tail_rel_tol", tol)?;
        let Some(tail) = self.spread_tail_bound(alpha) else {
            return Ok(0.0);
        };
        let head = exec::spectral_sum(self.n(), |i| self.c[i] / (alpha + self.lambda[i]));
        let ratio = tail / head;
        if ratio <= tol {
            return Ok(ratio);
        }
        let a = self.family.prior_decay().unwrap_or(0.5);
        let required = (2.0 * a * alpha * tol * head).powf(-1.0 / (2.0 * a)).ceil();
        Err(SpcError::TruncationTooSmall {
            n_trunc: self.n(),
            tol,
            alpha,
            ratio,
            required: if required.is_finite() { required as usize } else { usize::MAX },
        })
    }

    fn require_link(&self) -> Result<()> {
        match self.family {
            Family::Custom => Err(SpcError::Unsupported(
                "custom spectra carry no closed-form link function".into(),
            )),
            _ => Ok(()),
        }
    }

    /// `psi^2(t)` with `psi^2(C0) = T*T`.
    pub fn psi_squared(&self, t: f64) -> Result<f64> {
        self.require_link()?;
        check_arg("psi^2", t)?;
        Ok(match self.family {
            Family::ModeratePoly { a, p } => t.powf(2.0 * p / (1.0 + 2.0 * a)),
            _ => self.family.ln_psi_squared(t).exp(),
        })
    }

    /// Benchmark smoothness `Theta^2(t) = t psi^2(t)`.
    pub fn theta_squared(&self, t: f64) -> Result<f64> {
        Ok(t * self.psi_squared(t)?)
    }

    pub fn ln_theta_squared(&self, t: f64) -> Result<f64> {
        self.require_link()?;
        check_arg("Theta^2", t)?;
        Ok(t.ln() + self.family.ln_psi_squared(t))
    }

    /// `f^2(s) = (Theta^2)^{-1}(s)` by bisection on the strictly increasing `Theta^2`.
    ///
    /// The search runs on `ln t` until the bracket ratio drops below two and
    /// then halves arithmetically, so `t` is resolved to full precision.
    pub fn f_squared(&self, s: f64) -> Result<f64> {
        self.require_link()?;
        check_arg("f", s)?;
        let target = s.ln();
        let ln_theta = |t: f64| t.ln() + self.family.ln_psi_squared(t);

        let mut lo = f64::MIN_POSITIVE;
        if ln_theta(lo) > target {
            return Err(SpcError::OutOfDomain { what: "f", value: s });
        }
        let mut hi = self.domain_max();
        while ln_theta(hi) < target {
            hi *= 2.0;
            if !hi.is_finite() || hi > 1e300 {
                return Err(SpcError::OutOfDomain { what: "f", value: s });
            }
        }
        for _ in 0..INVERSION_MAX_ITER {
            let mid = if hi / lo > 2.0 {
                (0.5 * (lo.ln() + hi.ln())).exp()
            } else {
                0.5 * (lo + hi)
            };
            if mid <= lo || mid >= hi {
                break;
            }
            let v = ln_theta(mid);
            if v == target {
                return Ok(mid);
            }
            if v < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (elo, ehi) = ((ln_theta(lo) - target).abs(), (ln_theta(hi) - target).abs());
        Ok(if elo <= ehi { lo } else { hi })
    }

    /// `f(s) = sqrt(f^2(s))`, so that `C0^{1/2} = f(B*B)`.
    pub fn f_of(&self, s: f64) -> Result<f64> {
        Ok(self.f_squared(s)?.sqrt())
    }

    /// `Theta^2` as an index function on `(0, inf)`.
    pub fn benchmark_smoothness(&self) -> Result<IndexFunction> {
        self.require_link()?;
        let family = self.family;
        Ok(IndexFunction::from_ln(
            "Theta^2",
            move |t| t.ln() + family.ln_psi_squared(t),
            f64::INFINITY,
        ))
    }
}

const INVERSION_MAX_ITER: usize = 200;

fn check_arg(what: &'static str, t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(SpcError::OutOfDomain { what, value: t })
    }
}

/// Builds a named family and enforces the spread-tail tolerance at `alpha_min`,
/// the smallest regularization parameter the experiment will visit.
pub fn make_problem(
    family: Family,
    n_trunc: usize,
    tail_rel_tol: f64,
    alpha_min: f64,
) -> Result<SpectralProblem> {
    let problem = SpectralProblem::from_family(family, n_trunc)?;
    problem.check_tail(alpha_min, tail_rel_tol)?;
    Ok(problem)
}

/// Continuous, non-decreasing `phi: (0, t_max] -> R+` vanishing at the origin.
///
/// Stored through its logarithm so that rapidly decaying functions such as
/// `exp(-beta/t)` stay usable in ratios after `phi` itself underflows.
/// With an extension point `t0` the function continues as
/// `phi(t0) + (t - t0)` for `t > t0`.
#[derive(Clone)]
pub struct IndexFunction {
    label: String,
    ln_native: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    t_max: f64,
    extension_point: Option<f64>,
}

impl fmt::Debug for IndexFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndexFunction")
            .field("label", &self.label)
            .field("t_max", &self.t_max)
            .field("extension_point", &self.extension_point)
            .finish()
    }
}

impl IndexFunction {
    /// From a closure returning `ln phi(t)` on `(0, t_max]`.
    pub fn from_ln<F>(label: impl Into<String>, ln_eval: F, t_max: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            ln_native: Arc::new(ln_eval),
            t_max,
            extension_point: None,
        }
    }

    /// `t^k`, `k > 0`.
    pub fn power(k: f64) -> Result<Self> {
        require_positive("index exponent", k)?;
        Ok(Self::from_ln(format!("t^{k}"), move |t| k * t.ln(), f64::INFINITY))
    }

    /// `exp(-beta t^{-kappa})`.
    pub fn exp_type(beta: f64, kappa: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        require_positive("kappa", kappa)?;
        Ok(Self::from_ln(
            format!("exp(-{beta} t^-{kappa})"),
            move |t| -beta * t.powf(-kappa),
            f64::INFINITY,
        ))
    }

    /// `log^{-mu}(1/t)` on `(0, 1)`, extended linearly from `t0 = 1/2`.
    pub fn log_type(mu: f64) -> Result<Self> {
        require_positive("mu", mu)?;
        Self::from_ln(format!("log^-{mu}(1/t)"), move |t| -mu * (-t.ln()).ln(), 1.0)
            .with_extension(0.5)
    }

    /// Source function of the Sobolev ellipsoid relative to `C0 ~ j^{-(1+2a)}`.
    pub fn sobolev(a: f64, beta: f64) -> Result<Self> {
        require_positive("a", a)?;
        require_positive("beta", beta)?;
        Self::power(beta / (1.0 + 2.0 * a))
    }

    /// Source function of the analytic ellipsoid relative to `C0 ~ j^{-(1+2a)}`.
    pub fn analytic(a: f64, beta: f64) -> Result<Self> {
        require_positive("a", a)?;
        Self::exp_type(beta, 1.0 / (1.0 + 2.0 * a))
    }

    pub fn with_extension(mut self, t0: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0 < self.t_max) {
            return Err(SpcError::invalid(
                "extension_point",
                format!("must lie in (0, {}), got {t0}", self.t_max),
            ));
        }
        self.extension_point = Some(t0);
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn extension_point(&self) -> Option<f64> {
        self.extension_point
    }

    pub fn ln_eval(&self, t: f64) -> Result<f64> {
        check_arg("index function", t)?;
        if let Some(t0) = self.extension_point {
            if t > t0 {
                return Ok(((self.ln_native)(t0).exp() + (t - t0)).ln());
            }
        } else if t > self.t_max {
            return Err(SpcError::OutOfDomain { what: "index function", value: t });
        }
        Ok((self.ln_native)(t))
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.ln_eval(t)?.exp())
    }

    /// Non-decreasing on `points` log-spaced samples of `[lo, hi]`.
    pub fn is_monotone_on(&self, lo: f64, hi: f64, points: usize) -> Result<bool> {
        let grid = crate::filters::log_grid(lo, hi, points)?;
        let mut prev = f64::NEG_INFINITY;
        for t in grid {
            let v = self.ln_eval(t)?;
            if v < prev {
                return Ok(false);
            }
            prev = v;
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothness {
    /// `sum_j j^{2 beta} x_j^2 <= 1`.
    Sobolev(f64),
    /// `sum_j e^{2 beta j} x_j^2 <= 1`.
    Analytic(f64),
    Explicit,
}

/// Direction `w` of the source element `x* = phi(C0) w`.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    /// `w_j ∝ j^{-(1/2 + eps)}`, `eps = 0.05`, unit norm on the truncation.
    Default,
    /// `w = e_j` (one-based).
    Unit(usize),
    /// Default magnitudes with signs drawn from a seeded generator.
    RandomSigns(u64),
    Given(Vec<f64>),
}

/// Exponent offset of the default direction.
pub const DEFAULT_DIRECTION_EPS: f64 = 0.05;

impl Direction {
    fn materialize(&self, n: usize) -> Result<Vec<f64>> {
        let default = || {
            let mut w: Vec<f64> =
                (1..=n).map(|j| (j as f64).powf(-(0.5 + DEFAULT_DIRECTION_EPS))).collect();
            let norm = exec::compensated_sum_rev(&w.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
            w.iter_mut().for_each(|x| *x /= norm);
            w
        };
        match self {
            Direction::Default => Ok(default()),
            Direction::Unit(j) => {
                if *j == 0 || *j > n {
                    return Err(SpcError::IndexOutOfRange { index: *j, n });
                }
                let mut w = vec![0.0; n];
                w[j - 1] = 1.0;
                Ok(w)
            }
            Direction::RandomSigns(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut w = default();
                for x in &mut w {
                    if rng.random::<bool>() {
                        *x = -*x;
                    }
                }
                Ok(w)
            }
            Direction::Given(w) => {
                if w.len() != n {
                    return Err(SpcError::invalid(
                        "direction",
                        format!("length {} does not match n_trunc {n}", w.len()),
                    ));
                }
                let norm_sq = exec::compensated_sum_rev(&w.iter().map(|x| x * x).collect::<Vec<_>>());
                if norm_sq > 1.0 + 1e-12 {
                    return Err(SpcError::SourceViolation { norm_sq });
                }
                Ok(w.clone())
            }
        }
    }
}

/// Coordinates of the truth together with its source-condition descriptor.
#[derive(Debug, Clone)]
pub struct Truth {
    coords: Vec<f64>,
    phi: IndexFunction,
    style: Smoothness,
    w_norm: f64,
}

/// `x*_j = phi(c_j) w_j` for a Sobolev or analytic source function.
pub fn make_truth(problem: &SpectralProblem, style: Smoothness, direction: &Direction) -> Result<Truth> {
    let a = problem.family().prior_decay().ok_or_else(|| {
        SpcError::Unsupported("Sobolev/analytic truths need a named prior family".into())
    })?;
    let phi = match style {
        Smoothness::Sobolev(beta) => IndexFunction::sobolev(a, beta)?,
        Smoothness::Analytic(beta) => {
            require_positive("beta", beta)?;
            IndexFunction::analytic(a, beta)?
        }
        Smoothness::Explicit => {
            return Err(SpcError::invalid("style", "use Truth::explicit for explicit coordinates"))
        }
    };
    let w = direction.materialize(problem.n())?;
    let mut coords = Vec::with_capacity(w.len());
    for (&c, &wj) in problem.c().iter().zip(&w) {
        if wj == 0.0 {
            coords.push(0.0);
        } else {
            // phi(c_j) may underflow on its own while the product does not
            let ln = phi.ln_eval(c)? + wj.abs().ln();
            coords.push(wj.signum() * ln.exp());
        }
    }
    let w_norm = exec::compensated_sum_rev(&w.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    Ok(Truth { coords, phi, style, w_norm })
}

impl Truth {
    /// Explicit coordinates; rejected unless `x = phi(C0) w` with `|w| <= 1`.
    pub fn explicit(problem: &SpectralProblem, coords: Vec<f64>, phi: IndexFunction) -> Result<Self> {
        if coords.len() != problem.n() {
            return Err(SpcError::invalid(
                "truth_coords",
                format!("length {} does not match n_trunc {}", coords.len(), problem.n()),
            ));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(SpcError::invalid("truth_coords", "entries must be finite"));
        }
        let norm_sq = reconstructed_norm_sq(problem.c(), &coords, &phi)?;
        if norm_sq > 1.0 + 1e-12 {
            return Err(SpcError::SourceViolation { norm_sq });
        }
        Ok(Self {
            coords,
            phi,
            style: Smoothness::Explicit,
            w_norm: norm_sq.sqrt(),
        })
    }

    /// `x* = 0`.
    pub fn zero(problem: &SpectralProblem) -> Self {
        Self {
            coords: vec![0.0; problem.n()],
            phi: IndexFunction::from_ln("t", f64::ln, f64::INFINITY),
            style: Smoothness::Explicit,
            w_norm: 0.0,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn phi(&self) -> &IndexFunction {
        &self.phi
    }

    pub fn style(&self) -> Smoothness {
        self.style
    }

    pub fn w_norm(&self) -> f64 {
        self.w_norm
    }

    /// `sum_j (x_j / phi(c_j))^2`.
    pub fn reconstructed_norm_sq(&self, problem: &SpectralProblem) -> Result<f64> {
        reconstructed_norm_sq(problem.c(), &self.coords, &self.phi)
    }

    /// `sum_j j^{2 beta} x_j^2`.
    pub fn sobolev_norm_sq(&self, beta: f64) -> f64 {
        let terms: Vec<f64> = self
            .coords
            .iter()
            .enumerate()
            .map(|(i, x)| ((i + 1) as f64).powf(2.0 * beta) * x * x)
            .collect();
        exec::compensated_sum_rev(&terms)
    }

    /// `sum_j e^{2 beta j} x_j^2`, evaluated in log space.
    pub fn analytic_norm_sq(&self, beta: f64) -> f64 {
        let terms: Vec<f64> = self
            .coords
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if x == 0.0 {
                    0.0
                } else {
                    (2.0 * beta * (i + 1) as f64 + 2.0 * x.abs().ln()).exp()
                }
            })
            .collect();
        exec::compensated_sum_rev(&terms)
    }
}

fn reconstructed_norm_sq(c: &[f64], coords: &[f64], phi: &IndexFunction) -> Result<f64> {
    let mut terms = Vec::with_capacity(coords.len());
    for (&cj, &x) in c.iter().zip(coords) {
        if x == 0.0 {
            terms.push(0.0);
            continue;
        }
        let ln_phi = phi.ln_eval(cj)?;
        terms.push((2.0 * (x.abs().ln() - ln_phi)).exp());
    }
    Ok(exec::compensated_sum_rev(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moderate(n: usize) -> SpectralProblem {
        SpectralProblem::from_family(Family::ModeratePoly { a: 0.5, p: 1.0 }, n).unwrap()
    }

    fn severe(n: usize) -> SpectralProblem {
        SpectralProblem::from_family(Family::SevereExp { a: 0.5, q: 1.0, b: 1.0 }, n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn moderate_sequences() {
        let p = moderate(4);
        let c = [1.0, 0.25, 1.0 / 9.0, 1.0 / 16.0];
        let l = [1.0, 1.0 / 16.0, 1.0 / 81.0, 1.0 / 256.0];
        for i in 0..4 {
            assert!(rel(p.c()[i], c[i]) < 1e-15);
            assert!(rel(p.tau()[i], c[i]) < 1e-15);
            assert!(rel(p.lambda()[i], l[i]) < 1e-15);
        }
    }

    #[test]
    fn severe_sequences() {
        let p = severe(2);
        assert!(rel(p.lambda()[0], (-2.0f64).exp()) < 1e-15);
        assert!(rel(p.lambda()[1], 0.25 * (-4.0f64).exp()) < 1e-15);
        assert!((p.lambda()[0] - 0.135335).abs() < 1e-6);
        assert!((p.lambda()[1] - 0.0045790).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = [
            Family::ModeratePoly { a: 0.0, p: 1.0 },
            Family::ModeratePoly { a: 0.5, p: -1.0 },
            Family::SevereExp { a: 0.5, q: 0.0, b: 1.0 },
            Family::SevereExp { a: 0.5, q: 1.0, b: -1.0 },
        ];
        for f in bad {
            assert!(matches!(
                SpectralProblem::from_family(f, 10),
                Err(SpcError::InvalidParameter { .. })
            ));
        }
        assert!(SpectralProblem::from_family(Family::ModeratePoly { a: 0.5, p: 1.0 }, 1).is_err());
    }

    #[test]
    fn identity_operator_is_representable() {
        // p = 0: T = I, psi == 1, Theta^2(t) = t
        let p = SpectralProblem::from_family(Family::ModeratePoly { a: 0.5, p: 0.0 }, 8).unwrap();
        assert!(p.tau().iter().all(|&t| t == 1.0));
        assert!(rel(p.theta_squared(0.3).unwrap(), 0.3) < 1e-15);
    }

    #[test]
    fn psi_and_theta_examples() {
        let m = moderate(10);
        assert!(rel(m.psi_squared(0.25).unwrap(), 0.25) < 1e-15);
        assert!(rel(m.psi_squared(1.0 / 9.0).unwrap(), m.tau()[2]) < 1e-14);
        assert!(rel(m.theta_squared(0.5).unwrap(), 0.25) < 1e-15);
        let s = severe(10);
        assert!(rel(s.psi_squared(1.0).unwrap(), (-2.0f64).exp()) < 1e-15);
        assert!(rel(s.theta_squared(1.0).unwrap(), (-2.0f64).exp()) < 1e-15);
        assert!(m.psi_squared(0.0).is_err());
        assert!(m.theta_squared(-1.0).is_err());
    }

    #[test]
    fn link_consistency() {
        for p in [moderate(2000), severe(2000)] {
            for i in 0..p.n() {
                let tau = p.tau()[i];
                if tau < f64::MIN_POSITIVE {
                    continue; // subnormal range carries no relative precision
                }
                let c = p.c()[i];
                assert!(rel(p.psi_squared(c).unwrap(), tau) <= 1e-10, "psi j={}", i + 1);
                assert!(rel(p.theta_squared(c).unwrap(), p.lambda()[i]) <= 1e-10, "theta j={}", i + 1);
            }
        }
    }

    #[test]
    fn f_examples() {
        let m = moderate(10);
        assert!(rel(m.f_of(0.0625).unwrap(), 0.5) < 1e-13);
        for p in [moderate(10), severe(10)] {
            let f = p.f_of(p.lambda()[0]).unwrap();
            assert!(rel(f, p.c()[0].sqrt()) < 1e-12);
        }
        assert!(m.f_of(0.0).is_err());
        assert!(m.f_of(f64::NAN).is_err());
    }

    #[test]
    fn f_matches_closed_form_for_moderate() {
        let (a, p) = (0.5, 1.0);
        let m = moderate(10);
        for k in 0..50 {
            let s = 10f64.powf(-0.5 * k as f64);
            let closed = s.powf((1.0 + 2.0 * a) / (2.0 * (1.0 + 2.0 * a + 2.0 * p)));
            assert!(rel(m.f_of(s).unwrap(), closed) < 1e-13, "s={s}");
        }
    }

    #[test]
    fn inversion_round_trip() {
        for p in [moderate(100_000), severe(300)] {
            let lo = p.lambda_min_positive();
            let grid = crate::filters::log_grid(lo, p.lambda_max(), 200).unwrap();
            for s in grid {
                let t = p.f_squared(s).unwrap();
                let back = p.theta_squared(t).unwrap();
                assert!(rel(back, s) <= 1e-12, "s={s:e} back={back:e}");
            }
        }
    }

    #[test]
    fn severe_inverse_approaches_log_asymptote() {
        // f(s) ~ (log s^{-1/(2q)})^{-(1+2a)/(2b)}; ratio -> 1 slowly from above
        let p = severe(10);
        let ratios: Vec<f64> = [1e-8, 1e-16, 1e-50, 1e-100, 1e-300]
            .iter()
            .map(|&s: &f64| p.f_of(s).unwrap() * (0.5 * (-s.ln())))
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
        assert!(ratios.iter().all(|&r| r > 1.0));
        assert!(ratios[4] < 1.02);
    }

    #[test]
    fn theta_strictly_increasing() {
        for p in [moderate(10), severe(10)] {
            let g = crate::filters::log_grid(1e-6, 1.0, 500).unwrap();
            let v: Vec<f64> = g.iter().map(|&t| p.ln_theta_squared(t).unwrap()).collect();
            assert!(v.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn monotone_sequences() {
        for p in [moderate(1000), severe(1000)] {
            for s in [p.c(), p.tau(), p.lambda()] {
                assert!(s.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }

    #[test]
    fn tail_check_at_smallest_alpha() {
        let p = moderate(100_000);
        let ratio = p.check_tail(2.5e-10, 1e-2).unwrap();
        assert!(ratio < 1e-2);
        // Near alpha = lambda_n the tail is comparable to the head for any n.
        match p.check_tail(p.lambda()[p.n() - 1], 1e-6) {
            Err(SpcError::TruncationTooSmall { required, ratio, .. }) => {
                assert!(ratio > 0.1);
                assert!(required > p.n());
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn tail_bound_dominates_true_tail() {
        // oracle: direct summation of the omitted coordinates up to 10^7
        let n = 100_000usize;
        let alpha = 1e-4;
        let p = moderate(n);
        let tail: f64 = exec::spectral_sum(10_000_000 - n, |i| {
            let j = (n + i + 1) as f64;
            let c = j.powi(-2);
            c / (alpha + c * c)
        });
        let bound = p.spread_tail_bound(alpha).unwrap();
        assert!(tail <= bound && tail > 0.9 * bound * (1.0 - 0.01), "{tail} vs {bound}");
        let head = exec::spectral_sum(n, |i| p.c()[i] / (alpha + p.lambda()[i]));
        let ratio = p.check_tail(alpha, 1e-3).unwrap();
        assert!((ratio - bound / head).abs() < 1e-15);
        assert!(tail / head < ratio * 1.0001);
    }

    #[test]
    fn make_problem_reports_required_n() {
        let err = make_problem(Family::ModeratePoly { a: 0.5, p: 1.0 }, 1000, 1e-6, 1e-6).unwrap_err();
        let SpcError::TruncationTooSmall { required, .. } = err else { panic!() };
        let ok = make_problem(Family::ModeratePoly { a: 0.5, p: 1.0 }, required, 1e-6, 1e-6);
        assert!(ok.is_ok(), "{ok:?}");
    }

    #[test]
    fn custom_spectra() {
        let p = SpectralProblem::from_sequences(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(p.lambda(), &[1.0]);
        assert!(p.psi_squared(0.5).is_err());
        assert!(SpectralProblem::from_sequences(vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(SpectralProblem::from_sequences(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn index_function_extension() {
        let phi = IndexFunction::log_type(1.0).unwrap();
        assert_eq!(phi.extension_point(), Some(0.5));
        assert!(phi.is_monotone_on(1e-12, 10.0, 200).unwrap());
        let at = phi.eval(0.5).unwrap();
        assert!((phi.eval(1.5).unwrap() - (at + 1.0)).abs() < 1e-15);
        assert!(phi.eval(1e-300).unwrap() < 1e-2);
        let bare = IndexFunction::from_ln("log", |t: f64| -(-t.ln()).ln(), 1.0);
        assert!(bare.eval(2.0).is_err());
    }

    #[test]
    fn index_functions_vanish_at_origin() {
        for phi in [
            IndexFunction::power(0.5).unwrap(),
            IndexFunction::exp_type(1.0, 0.5).unwrap(),
            IndexFunction::sobolev(0.5, 2.0).unwrap(),
        ] {
            assert!(phi.is_monotone_on(1e-10, 1.0, 100).unwrap());
            assert!(phi.eval(1e-20).unwrap() < 1e-6);
        }
    }

    #[test]
    fn truth_unit_directions() {
        let p = moderate(10);
        let t = make_truth(&p, Smoothness::Sobolev(2.0), &Direction::Unit(1)).unwrap();
        assert_eq!(t.coords()[0], 1.0);
        assert!(t.coords()[1..].iter().all(|&x| x == 0.0));
        let t = make_truth(&p, Smoothness::Sobolev(2.0), &Direction::Unit(2)).unwrap();
        assert!(rel(t.coords()[1], 0.25) < 1e-15);
    }

    #[test]
    fn default_truth_inside_sobolev_ellipsoid() {
        let p = moderate(10_000);
        let t = make_truth(&p, Smoothness::Sobolev(2.0), &Direction::Default).unwrap();
        assert!(t.sobolev_norm_sq(2.0) <= 1.0 + 1e-12);
        assert!(t.sobolev_norm_sq(2.0) > 1.0 - 1e-12);
        assert!((t.reconstructed_norm_sq(&p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_truth_inside_ellipsoid() {
        for p in [moderate(5000), severe(5000)] {
            let t = make_truth(&p, Smoothness::Analytic(1.0), &Direction::Default).unwrap();
            assert!(t.analytic_norm_sq(1.0) <= 1.0 + 1e-12);
            assert!(t.reconstructed_norm_sq(&p).unwrap() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn random_signs_keep_magnitudes() {
        let p = moderate(100);
        let a = make_truth(&p, Smoothness::Sobolev(1.0), &Direction::Default).unwrap();
        let b = make_truth(&p, Smoothness::Sobolev(1.0), &Direction::RandomSigns(7)).unwrap();
        let c = make_truth(&p, Smoothness::Sobolev(1.0), &Direction::RandomSigns(7)).unwrap();
        assert_eq!(b.coords(), c.coords());
        assert!(a.coords().iter().zip(b.coords()).all(|(x, y)| x.abs() == y.abs()));
        assert!(b.coords().iter().any(|&x| x < 0.0));
    }

    #[test]
    fn truth_rejections() {
        let p = moderate(4);
        assert!(make_truth(&p, Smoothness::Sobolev(0.0), &Direction::Default).is_err());
        assert!(make_truth(&p, Smoothness::Analytic(-1.0), &Direction::Default).is_err());
        let phi = IndexFunction::power(1.0).unwrap();
        // x_2 = 0.5 needs w_2 = 0.5/c_2 = 2
        let bad = Truth::explicit(&p, vec![0.0, 0.5, 0.0, 0.0], phi.clone());
        assert!(matches!(bad, Err(SpcError::SourceViolation { .. })));
        let ok = Truth::explicit(&p, vec![0.5, 0.1, 0.0, 0.0], phi).unwrap();
        assert!((ok.w_norm() - (0.25f64 + 0.16).sqrt()).abs() < 1e-15);
    }
}
