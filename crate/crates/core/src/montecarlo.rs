//! Monte Carlo validation of the analytic contraction formulas.
//!
//! Replicate `i` draws its noise from `ChaCha8Rng` seeded with the master seed
//! and switched to stream `i`, so every replicate is reproducible on its own
//! and the result does not depend on how replicates are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{require_positive, Result, SpcError};
use crate::exec::{self, Backend};
use crate::filters::Filter;
use crate::posterior::{self, CoordinateRule};
use crate::spectrum::{SpectralProblem, Truth};

/// Transform used for standard normals; written into run metadata.
pub const NORMAL_TRANSFORM: &str =
    "ziggurat (rand_distr::StandardNormal) over ChaCha8, seed_from_u64(master), stream = replicate";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub replicates: usize,
    pub master_seed: u64,
    /// 0 uses the exact inner posterior expectation.
    pub posterior_draws_per_replicate: usize,
}

impl McConfig {
    pub fn new(replicates: usize, master_seed: u64, posterior_draws_per_replicate: usize) -> Result<Self> {
        if replicates < 2 {
            return Err(SpcError::invalid("replicates", format!("need at least 2, got {replicates}")));
        }
        Ok(Self {
            replicates,
            master_seed,
            posterior_draws_per_replicate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(SpcError::invalid("samples", format!("need at least 2, got {n}")));
        }
        let mean = exec::compensated_sum_rev(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|&s| (s - mean) * (s - mean)).collect();
        let var = exec::compensated_sum_rev(&dev) / (n - 1) as f64;
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        })
    }

    /// `|mean - value| <= k * std_error`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

pub fn replicate_rng(master_seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}

fn check_len(what: &str, got: usize, n: usize) -> Result<()> {
    if got != n {
        return Err(SpcError::invalid(what, format!("has {got} coordinates, problem has {n}")));
    }
    Ok(())
}

fn fill_data<R: Rng>(problem: &SpectralProblem, truth: &Truth, delta: f64, rng: &mut R, z: &mut [f64]) {
    for ((zj, &tau), &x) in z.iter_mut().zip(problem.tau()).zip(truth.coords()) {
        let xi: f64 = rng.sample(StandardNormal);
        *zj = tau.sqrt() * x + delta * xi;
    }
}

/// `z_j = sqrt(tau_j) x*_j + delta xi_j`, with noise from stream 0 of `seed`.
pub fn simulate_data(problem: &SpectralProblem, truth: &Truth, delta: f64, seed: u64) -> Result<Vec<f64>> {
    simulate_data_rng(problem, truth, delta, &mut replicate_rng(seed, 0))
}

pub fn simulate_data_rng<R: Rng>(
    problem: &SpectralProblem,
    truth: &Truth,
    delta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    require_positive("delta", delta)?;
    check_len("truth", truth.coords().len(), problem.n())?;
    let mut z = vec![0.0; problem.n()];
    fill_data(problem, truth, delta, rng, &mut z);
    Ok(z)
}

fn rules(problem: &SpectralProblem, filter: &Filter, alpha: f64, delta: f64) -> Vec<CoordinateRule> {
    (0..problem.n())
        .map(|i| posterior::rule_unchecked(problem, filter, alpha, delta, i))
        .collect()
}

/// `x_hat_j = m_j z_j`.
pub fn posterior_mean_from_data(
    problem: &SpectralProblem,
    filter: &Filter,
    alpha: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    require_positive("alpha", alpha)?;
    check_len("z", z.len(), problem.n())?;
    Ok(rules(problem, filter, alpha, 1.0)
        .iter()
        .zip(z)
        .map(|(r, &zj)| r.mean_gain * zj)
        .collect())
}

/// One draw `x_hat_j + sqrt(post_var_j) eta_j` from the posterior given `z`.
pub fn sample_posterior<R: Rng>(
    problem: &SpectralProblem,
    filter: &Filter,
    alpha: f64,
    delta: f64,
    z: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    require_positive("delta", delta)?;
    let mean = posterior_mean_from_data(problem, filter, alpha, z)?;
    let c = problem.c();
    let l = problem.lambda();
    Ok(mean
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let eta: f64 = rng.sample(StandardNormal);
            m + delta * (c[i] / (alpha + l[i])).sqrt() * eta
        })
        .collect())
}

struct Replicator<'a> {
    problem: &'a SpectralProblem,
    truth: &'a Truth,
    rules: Vec<CoordinateRule>,
    delta: f64,
}

impl Replicator<'_> {
    fn new<'a>(
        problem: &'a SpectralProblem,
        truth: &'a Truth,
        filter: &Filter,
        alpha: f64,
        delta: f64,
    ) -> Result<Replicator<'a>> {
        require_positive("alpha", alpha)?;
        require_positive("delta", delta)?;
        check_len("truth", truth.coords().len(), problem.n())?;
        Ok(Replicator {
            problem,
            truth,
            rules: rules(problem, filter, alpha, delta),
            delta,
        })
    }

    /// Returns `(|x* - x_hat|^2, sampled inner term)`; the second is `None` when `draws == 0`.
    fn run(&self, rng: &mut ChaCha8Rng, draws: usize) -> (f64, Option<f64>) {
        let n = self.problem.n();
        let mut z = vec![0.0; n];
        fill_data(self.problem, self.truth, self.delta, rng, &mut z);
        let x = self.truth.coords();
        let resid: Vec<f64> = (0..n).map(|i| x[i] - self.rules[i].mean_gain * z[i]).collect();
        let sq: Vec<f64> = resid.iter().map(|r| r * r).collect();
        let mise = exec::compensated_sum_rev(&sq);
        if draws == 0 {
            return (mise, None);
        }
        let mut inner = vec![0.0; draws];
        for slot in inner.iter_mut() {
            let mut acc = exec::Neumaier::new();
            for (r, rule) in resid.iter().zip(&self.rules) {
                let eta: f64 = rng.sample(StandardNormal);
                let d = r - rule.post_var.sqrt() * eta;
                acc += d * d;
            }
            *slot = acc.total();
        }
        (mise, Some(exec::compensated_sum_rev(&inner) / draws as f64))
    }
}

pub fn estimate_spc(
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    alpha: f64,
    delta: f64,
    mc: &McConfig,
) -> Result<McEstimate> {
    estimate_spc_with(Backend::default(), problem, truth, filter, alpha, delta, mc)
}

/// Outer average over noise replicates of `E_posterior |x* - x|^2`.
pub fn estimate_spc_with(
    backend: Backend,
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    alpha: f64,
    delta: f64,
    mc: &McConfig,
) -> Result<McEstimate> {
    let rep = Replicator::new(problem, truth, filter, alpha, delta)?;
    let spread = delta * delta * posterior::net_spread_with(Backend::Sequential, problem, alpha)?;
    let draws = mc.posterior_draws_per_replicate;
    let samples = exec::map_indexed_with(backend, mc.replicates, |i| {
        let mut rng = replicate_rng(mc.master_seed, i as u64);
        match rep.run(&mut rng, draws) {
            (mise, None) => mise + spread,
            (_, Some(sampled)) => sampled,
        }
    });
    McEstimate::from_samples(&samples)
}

pub fn estimate_mise(
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    alpha: f64,
    delta: f64,
    mc: &McConfig,
) -> Result<McEstimate> {
    estimate_mise_with(Backend::default(), problem, truth, filter, alpha, delta, mc)
}

/// Outer average of `|x* - x_hat|^2`; its expectation is `bias_sq + est_var`.
pub fn estimate_mise_with(
    backend: Backend,
    problem: &SpectralProblem,
    truth: &Truth,
    filter: &Filter,
    alpha: f64,
    delta: f64,
    mc: &McConfig,
) -> Result<McEstimate> {
    let rep = Replicator::new(problem, truth, filter, alpha, delta)?;
    let samples = exec::map_indexed_with(backend, mc.replicates, |i| {
        rep.run(&mut replicate_rng(mc.master_seed, i as u64), 0).0
    });
    McEstimate::from_samples(&samples)
}
