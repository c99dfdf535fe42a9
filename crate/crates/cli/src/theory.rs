//! Reference exponents and log-factor compensators for the `rate` command.

use spc_core::rates::{saturation_cap, AlphaRule};
use spc_core::{FilterKind, Regime};

/// Predicted slope of `ln spc` against `ln delta`, when one is known.
pub fn theory_exponent(regime: Option<Regime>, rule: &AlphaRule, kind: FilterKind) -> Option<f64> {
    match (regime?, rule) {
        (Regime::ModSobolev { a, p, beta }, AlphaRule::Apriori(_) | AlphaRule::Balance(_) | AlphaRule::Saturation) => {
            let d = 1.0 + 2.0 * a + 2.0 * p;
            let beta_eff = beta.min(saturation_cap(kind, d));
            let kappa = match rule {
                AlphaRule::Saturation => 2.0 * d / (1.0 + 2.0 * p + 2.0 * d),
                _ => 2.0 * d / (1.0 + 2.0 * p + 2.0 * beta),
            };
            Some((kappa * 2.0 * beta_eff / d).min(2.0 - kappa * (1.0 + 2.0 * p) / d))
        }
        (Regime::SevAnalytic { q, beta, .. }, AlphaRule::Apriori(_)) => {
            let cap = saturation_cap(kind, 2.0 * q);
            if beta <= cap {
                Some(2.0 * beta / (beta + q))
            } else if kind == FilterKind::None {
                Some(4.0 * q / (beta + q))
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Compensator `c(delta)` such that `spc / c` should stay in a bounded band
/// for regimes whose rate carries a logarithm.
pub fn log_compensator(regime: Option<Regime>, kind: FilterKind) -> Option<Box<dyn Fn(f64) -> f64>> {
    match regime? {
        Regime::SevSobolev { b, beta, .. } => Some(Box::new(move |d: f64| (-2.0 * d.ln()).powf(-2.0 * beta / b))),
        Regime::ModAnalytic { p, .. } if kind == FilterKind::Cutoff => {
            Some(Box::new(move |d: f64| d * d * (-d.ln()).powf(1.0 + 2.0 * p)))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mod_sob(beta: f64) -> Option<Regime> {
        Some(Regime::ModSobolev { a: 0.5, p: 1.0, beta })
    }

    #[test]
    fn moderate_apriori_exponents() {
        let r = AlphaRule::Apriori(mod_sob(2.0).unwrap());
        let e = theory_exponent(mod_sob(2.0), &r, FilterKind::None).unwrap();
        assert!((e - 8.0 / 7.0).abs() < 1e-14);
        let e = theory_exponent(mod_sob(4.0), &r, FilterKind::None).unwrap();
        assert!((e - 16.0 / 11.0).abs() < 1e-14);
        let e = theory_exponent(mod_sob(8.0), &r, FilterKind::Cutoff).unwrap();
        assert!((e - 32.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn saturated_rule_caps_at_d() {
        let e = theory_exponent(mod_sob(8.0), &AlphaRule::Saturation, FilterKind::None).unwrap();
        assert!((e - 16.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_rule_has_no_exponent() {
        assert!(theory_exponent(mod_sob(2.0), &AlphaRule::Fixed(1e-3), FilterKind::None).is_none());
    }

    #[test]
    fn severe_analytic() {
        let base = Regime::SevAnalytic { q: 1.0, b: 1.0, beta: 1.0 };
        let r = AlphaRule::Apriori(base);
        assert_eq!(theory_exponent(Some(base), &r, FilterKind::None), Some(1.0));
        let reg = Some(Regime::SevAnalytic { q: 1.0, b: 1.0, beta: 3.0 });
        assert_eq!(theory_exponent(reg, &r, FilterKind::None), Some(1.0));
        assert_eq!(theory_exponent(reg, &r, FilterKind::Cutoff), Some(1.5));
    }

    #[test]
    fn compensators() {
        let reg = Some(Regime::SevSobolev { a: 0.5, b: 1.0, beta: 1.0, sigma: 1.0 });
        let c = log_compensator(reg, FilterKind::None).unwrap();
        assert!((c(0.5f64.sqrt()) - 2f64.ln().powi(-2)).abs() < 1e-12);
        assert!(log_compensator(mod_sob(2.0), FilterKind::Cutoff).is_none());
        let reg = Some(Regime::ModAnalytic { a: 0.5, p: 1.0, beta: 1.0 });
        assert!(log_compensator(reg, FilterKind::None).is_none());
        assert!(log_compensator(reg, FilterKind::Cutoff).is_some());
    }
}
