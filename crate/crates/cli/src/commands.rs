use std::path::Path;

use spc_core::calibration::{rate_guarantee, solve_balance, RateGuarantee};
use spc_core::checks::{verify, VerifyOptions};
use spc_core::montecarlo::{estimate_spc, NORMAL_TRANSFORM};
use spc_core::rates::{run_sweep, sweep_rows, SweepRow};
use spc_core::{posterior, AlphaRule, Backend, Family};

use crate::config::Prepared;
use crate::error::CliError;
use crate::output::{num, Table};
use crate::theory::{log_compensator, theory_exponent};

fn check_tail(p: &Prepared, alphas: impl IntoIterator<Item = f64>) -> Result<(), CliError> {
    if matches!(p.problem.family(), Family::Custom) {
        return Ok(());
    }
    let alpha_min = alphas.into_iter().fold(f64::INFINITY, f64::min);
    if alpha_min.is_finite() {
        p.problem.check_tail(alpha_min, p.config.tail_rel_tol)?;
    }
    Ok(())
}

fn sweep_table(table: &mut Table, rows: &[SweepRow]) {
    for r in rows {
        table.row(vec![num(r.delta), num(r.alpha), num(r.bias_sq), num(r.est_var), num(r.spread), num(r.spc)]);
    }
}

const SWEEP_COLUMNS: [&str; 6] = ["delta", "alpha", "bias_sq", "est_var", "spread", "spc"];

fn base_table(p: &Prepared, command: &str, columns: &[&'static str]) -> Table {
    let mut t = Table::new(command, &p.config, columns);
    t.meta("backend", Backend::default().name());
    t
}

pub fn eval(p: &Prepared, out: Option<&Path>) -> Result<(), CliError> {
    let rows = sweep_rows(Backend::default(), &p.problem, &p.truth, &p.filter, &p.rule, &p.deltas)?;
    check_tail(p, rows.iter().map(|r| r.alpha))?;
    let mut t = base_table(p, "eval", &SWEEP_COLUMNS);
    sweep_table(&mut t, &rows);
    t.emit(out)
}

fn guarantee(p: &Prepared, alpha_lo: f64) -> Result<Option<RateGuarantee>, CliError> {
    match (&p.phi, p.problem.family()) {
        (Some(phi), Family::ModeratePoly { .. } | Family::SevereExp { .. }) if alpha_lo < p.problem.lambda_max() => {
            Ok(Some(rate_guarantee(&p.problem, phi, &p.filter, alpha_lo)?))
        }
        _ => Ok(None),
    }
}

fn guarantee_label(g: Option<RateGuarantee>) -> String {
    match g {
        Some(RateGuarantee::Qualified { margin }) => format!("qualified(margin={})", num(margin)),
        Some(g) => g.label().into(),
        None => "unverified".into(),
    }
}

pub fn rate(p: &Prepared, out: Option<&Path>) -> Result<(), CliError> {
    let mut sweep = run_sweep(&p.problem, &p.truth, &p.filter, &p.rule, &p.deltas)?;
    check_tail(p, sweep.rows.iter().map(|r| r.alpha))?;
    let regime = p.regime();
    if let Some(e) = theory_exponent(regime, &p.rule, p.filter.kind()) {
        sweep = sweep.with_theory(e);
    }
    if let Some(c) = log_compensator(regime, p.filter.kind()) {
        sweep = sweep.with_band(c)?;
    }

    let mut t = base_table(p, "rate", &SWEEP_COLUMNS);
    sweep_table(&mut t, &sweep.rows);
    let mut summary = format!(
        "summary fitted_exponent={} theory_exponent={} fit_r2={}",
        num(sweep.fitted_exponent),
        sweep.theory_exponent.map_or("none".into(), num),
        num(sweep.fit_r2)
    );
    if let Some((lo, hi)) = sweep.log_factor_ratio_band {
        summary.push_str(&format!(" band_min={} band_max={} band_ratio={}", num(lo), num(hi), num(hi / lo)));
    }
    if matches!(p.rule, AlphaRule::Balance(_)) {
        let g = guarantee(p, sweep.min_alpha())?;
        summary.push_str(&format!(" rate_guarantee={}", guarantee_label(g)));
    }
    eprintln!("{summary}");
    t.trailer(summary);
    t.emit(out)
}

pub fn verify_cmd(
    p: &Prepared,
    seed: u64,
    gamma_star_override: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let opts = VerifyOptions {
        seed,
        gamma_star_override,
        ..Default::default()
    };
    let report = verify(&p.problem, &p.filter, &opts)?;
    let mut t = base_table(p, "verify", &["check", "status", "measured", "threshold", "detail"]);
    for c in &report.checks {
        t.row(vec![
            c.name.clone(),
            c.status.to_string(),
            num(c.measured),
            num(c.threshold),
            c.detail.replace(',', ";"),
        ]);
    }
    t.emit(out)?;
    let failed = report.checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}

pub fn mc(p: &Prepared, out: Option<&Path>) -> Result<(), CliError> {
    let mc = p
        .mc
        .as_ref()
        .ok_or_else(|| CliError::Config("invalid `replicates`: the mc command needs `replicates` >= 2".into()))?;
    let mut alphas = Vec::with_capacity(p.deltas.len());
    for &d in &p.deltas {
        alphas.push(p.rule.alpha(&p.problem, d)?);
    }
    check_tail(p, alphas.iter().copied())?;

    let mut t = base_table(
        p,
        "mc",
        &["delta", "alpha", "spc_mc_mean", "spc_mc_stderr", "spc_analytic", "z_score"],
    );
    t.meta("normal_transform", NORMAL_TRANSFORM);
    t.meta("replicates", mc.replicates.to_string());
    t.meta("seed", mc.master_seed.to_string());
    t.meta("posterior_draws_per_replicate", mc.posterior_draws_per_replicate.to_string());
    for (&delta, &alpha) in p.deltas.iter().zip(&alphas) {
        let exact = posterior::spc(&p.problem, &p.truth, &p.filter, alpha, delta)?;
        let e = estimate_spc(&p.problem, &p.truth, &p.filter, alpha, delta, mc)?;
        let z = if e.std_error > 0.0 {
            (e.mean - exact.spc) / e.std_error
        } else if e.mean == exact.spc {
            0.0
        } else {
            f64::INFINITY
        };
        t.row(vec![num(delta), num(alpha), num(e.mean), num(e.std_error), num(exact.spc), num(z)]);
    }
    t.emit(out)
}

pub fn balance(p: &Prepared, out: Option<&Path>) -> Result<(), CliError> {
    let phi = p
        .phi
        .as_ref()
        .ok_or_else(|| CliError::Config("invalid `truth`: balance needs a truth with a source function".into()))?;
    if matches!(p.problem.family(), Family::Custom) {
        return Err(CliError::Config("invalid `family`: balance needs a named family".into()));
    }
    let mut sols = Vec::with_capacity(p.deltas.len());
    for &d in &p.deltas {
        sols.push(solve_balance(&p.problem, phi, d)?);
    }
    check_tail(p, sols.iter().map(|s| s.alpha_star))?;
    let alpha_lo = sols.iter().map(|s| s.alpha_star).fold(f64::INFINITY, f64::min);
    let label = guarantee_label(guarantee(p, alpha_lo)?);

    let mut t = base_table(
        p,
        "balance",
        &["delta", "alpha_star", "lhs", "rhs", "residual_rel", "iterations", "sign_changes", "rate_guarantee"],
    );
    for (s, &d) in sols.iter().zip(&p.deltas) {
        t.row(vec![
            num(d),
            num(s.alpha_star),
            num(s.lhs_value),
            num(s.rhs_value),
            num(s.residual_rel),
            s.iterations.to_string(),
            s.sign_changes.to_string(),
            label.clone(),
        ]);
    }
    t.emit(out)
}

