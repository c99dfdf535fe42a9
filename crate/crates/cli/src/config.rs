//! Flat JSON experiment configuration and its translation into core objects.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spc_core::calibration::Regime;
use spc_core::filters::log_grid;
use spc_core::montecarlo::McConfig;
use spc_core::rates::AlphaRule;
use spc_core::{make_truth, Direction, Family, Filter, IndexFunction, Smoothness, SpectralProblem, Truth};

use crate::error::CliError;

pub const CONFIG_HELP: &str = "\
CONFIG KEYS (flat JSON object; every key optional):
  family          moderate | severe | custom               [moderate]
  a, p            moderate: c_j = j^-(1+2a), tau_j = j^-2p  [0.5, 1.0]
  q, b            severe:   tau_j = exp(-2 q j^b)           [1.0, 1.0]
  c, tau          custom eigenvalue sequences (arrays)
  n_trunc         number of coordinates                     [100000]
  tail_rel_tol    spread-tail tolerance at the smallest alpha [0.01]
  truth           sobolev | analytic | explicit | zero      [sobolev]
  beta            smoothness of the truth                   [2.0]
  direction       default | random | unit:<j>               [default]
  direction_seed  seed for direction = random               [0]
  truth_coords    coordinates for truth = explicit (array)
  phi             source function for explicit truths:
                  power:<k> | exp:<beta>:<kappa> | log:<mu>  [power:1]
  filter          none | tikhonov | kfold:<k> | cutoff      [none]
  alpha_rule      balance | apriori | saturation | fixed:<v> [apriori]
  sigma           upper window exponent, severe/sobolev     [1.0]
  delta           single noise level (overrides the grid)
  delta_min       smallest noise level of the grid          [1e-6]
  delta_max       largest noise level of the grid           [1e-2]
  delta_points    number of geometric grid points           [13]
  replicates      Monte Carlo replicates (enables mc, >= 2)
  seed            Monte Carlo master seed                   [0]
  draws           posterior draws per replicate, 0 = exact  [0]
  output          output path (overridden by --out)

EXIT CODES: 0 success, 1 verify failure or I/O error,
            2 invalid configuration, 3 numeric failure.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: String,
    pub a: f64,
    pub p: f64,
    pub q: f64,
    pub b: f64,
    pub c: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub n_trunc: usize,
    pub tail_rel_tol: f64,
    pub truth: String,
    pub beta: f64,
    pub direction: String,
    pub direction_seed: u64,
    pub truth_coords: Option<Vec<f64>>,
    pub phi: String,
    pub filter: String,
    pub alpha_rule: String,
    pub sigma: f64,
    pub delta: Option<f64>,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_points: usize,
    pub replicates: Option<usize>,
    pub seed: u64,
    pub draws: usize,
    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: "moderate".into(),
            a: 0.5,
            p: 1.0,
            q: 1.0,
            b: 1.0,
            c: None,
            tau: None,
            n_trunc: 100_000,
            tail_rel_tol: 1e-2,
            truth: "sobolev".into(),
            beta: 2.0,
            direction: "default".into(),
            direction_seed: 0,
            truth_coords: None,
            phi: "power:1".into(),
            filter: "none".into(),
            alpha_rule: "apriori".into(),
            sigma: 1.0,
            delta: None,
            delta_min: 1e-6,
            delta_max: 1e-2,
            delta_points: 13,
            replicates: None,
            seed: 0,
            draws: 0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// The materialized configuration as one line of JSON, without `output`.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn field(name: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid `{name}`: {reason}"))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(field(name, format!("must be finite and > 0, got {v}")))
    }
}

fn parse_f64(name: &str, s: &str) -> Result<f64, CliError> {
    s.parse::<f64>().map_err(|_| field(name, format!("`{s}` is not a number")))
}

pub fn parse_phi(spec: &str) -> Result<IndexFunction, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let f = match parts.as_slice() {
        ["power", k] => IndexFunction::power(parse_f64("phi", k)?),
        ["exp", beta, kappa] => IndexFunction::exp_type(parse_f64("phi", beta)?, parse_f64("phi", kappa)?),
        ["log", mu] => IndexFunction::log_type(parse_f64("phi", mu)?),
        _ => return Err(field("phi", format!("unknown source function `{spec}`"))),
    };
    f.map_err(|e| field("phi", e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruthKind {
    Sobolev,
    Analytic,
    Explicit,
    Zero,
}

/// Everything a command needs, validated before any computation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub problem: SpectralProblem,
    pub truth: Truth,
    pub truth_kind: TruthKind,
    pub filter: Filter,
    pub rule: AlphaRule,
    /// Source function of the truth, when it has one.
    pub phi: Option<IndexFunction>,
    /// Descending.
    pub deltas: Vec<f64>,
    pub mc: Option<McConfig>,
}

impl Prepared {
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        let family = build_family(&config)?;
        let problem = match family {
            Family::Custom => {
                let (Some(c), Some(tau)) = (config.c.clone(), config.tau.clone()) else {
                    return Err(field("family", "custom needs both `c` and `tau`"));
                };
                SpectralProblem::from_sequences(c, tau).map_err(|e| field("c/tau", e))?
            }
            f => {
                if config.n_trunc < 2 {
                    return Err(field("n_trunc", format!("must be at least 2, got {}", config.n_trunc)));
                }
                SpectralProblem::from_family(f, config.n_trunc).map_err(|e| field("family", e))?
            }
        };
        positive("tail_rel_tol", config.tail_rel_tol)?;

        let truth_kind = match config.truth.as_str() {
            "sobolev" => TruthKind::Sobolev,
            "analytic" => TruthKind::Analytic,
            "explicit" => TruthKind::Explicit,
            "zero" => TruthKind::Zero,
            other => return Err(field("truth", format!("unknown truth `{other}`"))),
        };
        if matches!(truth_kind, TruthKind::Sobolev | TruthKind::Analytic) {
            positive("beta", config.beta)?;
        }
        let direction = parse_direction(&config)?;
        let (truth, phi) = match truth_kind {
            TruthKind::Sobolev | TruthKind::Analytic => {
                let a = problem
                    .family()
                    .prior_decay()
                    .ok_or_else(|| field("truth", "sobolev/analytic truths need a named family"))?;
                let (style, phi) = if truth_kind == TruthKind::Sobolev {
                    (Smoothness::Sobolev(config.beta), IndexFunction::sobolev(a, config.beta))
                } else {
                    (Smoothness::Analytic(config.beta), IndexFunction::analytic(a, config.beta))
                };
                let truth = make_truth(&problem, style, &direction).map_err(|e| field("truth", e))?;
                (truth, Some(phi.map_err(|e| field("beta", e))?))
            }
            TruthKind::Explicit => {
                let coords = config
                    .truth_coords
                    .clone()
                    .ok_or_else(|| field("truth_coords", "required for truth = explicit"))?;
                let phi = parse_phi(&config.phi)?;
                let truth = Truth::explicit(&problem, coords, phi.clone()).map_err(|e| field("truth_coords", e))?;
                (truth, Some(phi))
            }
            TruthKind::Zero => (Truth::zero(&problem), None),
        };

        let filter: Filter = config.filter.parse().map_err(|e| field("filter", e))?;
        let rule = parse_rule(&config, &problem, truth_kind, phi.as_ref())?;
        let deltas = parse_deltas(&config)?;
        let mc = match config.replicates {
            Some(r) => Some(McConfig::new(r, config.seed, config.draws).map_err(|e| field("replicates", e))?),
            None => None,
        };
        Ok(Self {
            config,
            problem,
            truth,
            truth_kind,
            filter,
            rule,
            phi,
            deltas,
            mc,
        })
    }

    pub fn regime(&self) -> Option<Regime> {
        regime_for(&self.config, self.problem.family(), self.truth_kind)
    }
}

fn build_family(config: &ExperimentConfig) -> Result<Family, CliError> {
    match config.family.as_str() {
        "moderate" => {
            positive("a", config.a)?;
            if !(config.p.is_finite() && config.p >= 0.0) {
                return Err(field("p", format!("must be finite and >= 0, got {}", config.p)));
            }
            Ok(Family::ModeratePoly { a: config.a, p: config.p })
        }
        "severe" => {
            positive("a", config.a)?;
            positive("q", config.q)?;
            positive("b", config.b)?;
            Ok(Family::SevereExp { a: config.a, q: config.q, b: config.b })
        }
        "custom" => Ok(Family::Custom),
        other => Err(field("family", format!("unknown family `{other}`"))),
    }
}

fn parse_direction(config: &ExperimentConfig) -> Result<Direction, CliError> {
    match config.direction.as_str() {
        "default" => Ok(Direction::Default),
        "random" => Ok(Direction::RandomSigns(config.direction_seed)),
        s => match s.strip_prefix("unit:") {
            Some(j) => j
                .parse::<usize>()
                .map(Direction::Unit)
                .map_err(|_| field("direction", format!("`{j}` is not an index"))),
            None => Err(field("direction", format!("unknown direction `{s}`"))),
        },
    }
}

fn regime_for(config: &ExperimentConfig, family: Family, kind: TruthKind) -> Option<Regime> {
    let analytic = match kind {
        TruthKind::Sobolev => false,
        TruthKind::Analytic => true,
        _ => return None,
    };
    Regime::for_problem(family, analytic, config.beta, config.sigma)
}

fn parse_rule(
    config: &ExperimentConfig,
    problem: &SpectralProblem,
    kind: TruthKind,
    phi: Option<&IndexFunction>,
) -> Result<AlphaRule, CliError> {
    match config.alpha_rule.as_str() {
        "balance" => {
            if matches!(problem.family(), Family::Custom) {
                return Err(field("alpha_rule", "balance needs a named family with a link function"));
            }
            let phi = phi.ok_or_else(|| field("alpha_rule", "balance needs a truth with a source function"))?;
            Ok(AlphaRule::Balance(phi.clone()))
        }
        "apriori" => {
            let regime = regime_for(config, problem.family(), kind)
                .ok_or_else(|| field("alpha_rule", "apriori needs a named family and a sobolev/analytic truth"))?;
            if let Regime::SevSobolev { sigma, .. } = regime {
                positive("sigma", sigma)?;
            }
            if let Regime::SevAnalytic { b, .. } = regime {
                if b != 1.0 {
                    return Err(field("alpha_rule", format!("apriori with severe/analytic needs b = 1, got {b}")));
                }
            }
            Ok(AlphaRule::Apriori(regime))
        }
        "saturation" => Ok(AlphaRule::Saturation),
        s => match s.strip_prefix("fixed:") {
            Some(v) => Ok(AlphaRule::Fixed(positive("alpha_rule", parse_f64("alpha_rule", v)?)?)),
            None => Err(field("alpha_rule", format!("unknown rule `{s}`"))),
        },
    }
}

fn parse_deltas(config: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    if let Some(d) = config.delta {
        return Ok(vec![positive("delta", d)?]);
    }
    let lo = positive("delta_min", config.delta_min)?;
    let hi = positive("delta_max", config.delta_max)?;
    if hi >= 1.0 {
        return Err(field("delta_max", format!("must be below 1, got {hi}")));
    }
    if config.delta_points == 0 {
        return Err(field("delta_points", "must be at least 1"));
    }
    if config.delta_points == 1 {
        if lo != hi {
            return Err(field("delta_points", "a single point needs delta_min = delta_max"));
        }
        return Ok(vec![lo]);
    }
    if lo >= hi {
        return Err(field("delta_min", format!("must be below delta_max = {hi}, got {lo}")));
    }
    let mut g = log_grid(lo, hi, config.delta_points).map_err(|e| field("delta_points", e))?;
    g.reverse();
    Ok(g)
}
