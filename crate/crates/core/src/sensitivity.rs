//! FDR violations when agents' true power differs from the one a
//! fixed-reward menu was designed for.

use rayon::prelude::*;
use serde::Serialize;

use crate::contracts::Menu;
use crate::error::{invalid, Error, Result};
use crate::objectives::{type_threshold, PrincipalObjective};
use crate::quadrature::linspace;
use crate::test_model::TestModel;

/// Default number of reports in a sweep.
pub const DEFAULT_SWEEP_POINTS: usize = 256;
/// Width of the boundary bands left out of the default sweep grid.
pub const SWEEP_EDGE_BAND: f64 = 1e-3;
const REPORT_TOL: f64 = 1e-8;

/// A fixed-reward menu built with `designed` and faced by agents whose
/// alternative behaves like `actual`.
#[derive(Debug, Clone)]
pub struct MisspecScenario {
    pub designed: TestModel,
    pub actual: TestModel,
    pub objective: PrincipalObjective,
    pub menu: Menu,
}

impl MisspecScenario {
    pub fn new(designed: TestModel, actual: TestModel, objective: PrincipalObjective, menu: Menu) -> Result<Self> {
        let reward = menu.contracts()[0].reward;
        if menu.contracts().iter().any(|c| c.reward != reward) {
            return Err(invalid("sensitivity analysis needs a constant-reward menu"));
        }
        Ok(Self {
            designed,
            actual,
            objective,
            menu,
        })
    }

    pub fn reward(&self) -> f64 {
        self.menu.contracts()[0].reward
    }

    pub fn range(&self) -> (f64, f64) {
        let s = self.menu.support();
        (s[0], s[s.len() - 1])
    }

    /// Designed threshold for report p, continuous in p.
    pub fn threshold(&self, p: f64) -> Result<f64> {
        type_threshold(p, &self.objective, &self.designed)
    }

    /// c_p of the fixed-reward menu extended to reports between support points,
    /// by linear interpolation of menu costs.
    fn cost(&self, p: f64) -> f64 {
        let s = self.menu.support();
        let c = self.menu.contracts();
        let k = s.partition_point(|&x| x <= p).clamp(1, s.len() - 1);
        let t = (p - s[k - 1]) / (s[k] - s[k - 1]);
        c[k - 1].cost + t * (c[k].cost - c[k - 1].cost)
    }

    /// Utility of true type q under the actual power when reporting menu entry i.
    pub fn misspecified_utility(&self, q: f64, index: usize) -> f64 {
        let c = &self.menu.contracts()[index];
        c.reward * (q * self.actual.type_one_error(c.tau) + (1.0 - q) * self.actual.power(c.tau)) - c.cost
    }

    /// q + (1 − q)β̃₁′(τ_p) − p − (1 − p)β₁′(τ_p).
    pub fn stationarity_residual(&self, q: f64, p: f64) -> Result<f64> {
        let tau = self.threshold(p)?;
        Ok(q + (1.0 - q) * self.actual.power_derivative(tau) - p - (1.0 - p) * self.designed.power_derivative(tau))
    }
}

fn check_open(x: f64, what: &str) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("{what} {x} must lie in (0, 1)")));
    }
    Ok(())
}

/// ζ = ((1 − p)/p)β₁(τ_p) − ((1 − q)/q)β̃₁(τ_p) with τ_p from the menu.
pub fn fdr_gap(q: f64, p: f64, scenario: &MisspecScenario) -> Result<f64> {
    check_open(q, "true type")?;
    check_open(p, "reported type")?;
    let tau = scenario.menu.contract_for(p)?.tau;
    Ok(gap_at(q, p, tau, scenario))
}

fn gap_at(q: f64, p: f64, tau: f64, scenario: &MisspecScenario) -> f64 {
    (1.0 - p) / p * scenario.designed.power(tau) - (1.0 - q) / q * scenario.actual.power(tau)
}

/// True type whose first-order condition is met at report p:
/// q = (p + (1 − p)b − b̃)/(1 − b̃), b = β₁′(τ_p), b̃ = β̃₁′(τ_p).
pub fn implied_true_type(p: f64, scenario: &MisspecScenario) -> Result<f64> {
    let tau = scenario.threshold(p)?;
    let b = scenario.designed.power_derivative(tau);
    let bt = scenario.actual.power_derivative(tau);
    if (1.0 - bt).abs() < 1e-12 {
        return Err(invalid(format!("actual power slope is 1 at threshold {tau}")));
    }
    Ok((p + (1.0 - p) * b - bt) / (1.0 - bt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Misreport {
    /// Solution of the first-order condition, or the best boundary report.
    pub report: f64,
    /// Whether the first-order condition changed sign inside the menu range.
    pub interior: bool,
    /// Argmax of the misspecified utility over the menu entries.
    pub grid_report: f64,
}

/// Report chosen by true type q when the actual power governs its approvals.
pub fn misspecified_report(q: f64, scenario: &MisspecScenario) -> Result<Misreport> {
    check_open(q, "true type")?;
    let menu = &scenario.menu;
    let best = (0..menu.len())
        .map(|i| (i, scenario.misspecified_utility(q, i)))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let grid_report = menu.support()[best.0];

    let (lo, hi) = scenario.range();
    let r_lo = scenario.stationarity_residual(q, lo)?;
    let r_hi = scenario.stationarity_residual(q, hi)?;
    if r_lo.signum() == r_hi.signum() && r_lo != 0.0 && r_hi != 0.0 {
        let u = |p: f64| {
            let tau = scenario.threshold(p).unwrap_or(0.0);
            scenario.reward() * (q * tau + (1.0 - q) * scenario.actual.power(tau)) - scenario.cost(p)
        };
        let report = if u(lo) >= u(hi) { lo } else { hi };
        return Ok(Misreport {
            report,
            interior: false,
            grid_report,
        });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > REPORT_TOL {
        let mid = 0.5 * (a + b);
        let r = scenario.stationarity_residual(q, mid)?;
        if (r > 0.0) == (r_lo > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Misreport {
        report: 0.5 * (a + b),
        interior: true,
        grid_report,
    })
}

/// Closed-form gap at report p for the type q(p) that chooses it:
/// ζ = ((1 − p)/p)β₁ − (1 − p)(1 − b)/(p + (1 − p)b − b̃)·β̃₁, all at τ_p.
///
/// Errors when β₁′(τ_p) = 1 or when no true type in (0, 1) picks p.
pub fn fdr_gap_fixed_reward(p: f64, scenario: &MisspecScenario) -> Result<f64> {
    check_open(p, "reported type")?;
    let (lo, hi) = scenario.range();
    if p < lo - 1e-12 || p > hi + 1e-12 {
        return Err(invalid(format!("report {p} outside the menu range [{lo}, {hi}]")));
    }
    let tau = scenario.threshold(p)?;
    let b = scenario.designed.power_derivative(tau);
    if (b - 1.0).abs() < 1e-12 {
        return Err(invalid(format!("designed power slope is 1 at threshold {tau}")));
    }
    let q = implied_true_type(p, scenario)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::ConditionViolated(format!(
            "no true type in (0, 1) reports {p} (implied {q})"
        )));
    }
    let bt = scenario.actual.power_derivative(tau);
    let odds = (1.0 - p) * (1.0 - b) / (p + (1.0 - p) * b - bt);
    Ok((1.0 - p) / p * scenario.designed.power(tau) - odds * scenario.actual.power(tau))
}

/// Reports strictly inside the menu range, away from the edges.
pub fn default_p_grid(scenario: &MisspecScenario, n: usize) -> Vec<f64> {
    let (lo, hi) = scenario.range();
    linspace(lo + SWEEP_EDGE_BAND, hi - SWEEP_EDGE_BAND, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    /// Type whose first-order condition selects p; None when it falls outside (0, 1).
    pub implied_q: Option<f64>,
    pub gap: Option<f64>,
}

/// Closed-form gap over a grid of reports.
pub fn sensitivity_sweep(scenario: &MisspecScenario, p_grid: &[f64]) -> Result<Vec<SweepRow>> {
    p_grid
        .par_iter()
        .map(|&p| match fdr_gap_fixed_reward(p, scenario) {
            Ok(gap) => Ok(SweepRow {
                p,
                implied_q: Some(implied_true_type(p, scenario)?),
                gap: Some(gap),
            }),
            Err(Error::ConditionViolated(_)) => Ok(SweepRow {
                p,
                implied_q: None,
                gap: None,
            }),
            Err(e) => Err(e),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::build_fixed_reward;
    use crate::evaluation::fdr;

    fn gm(theta: f64) -> TestModel {
        TestModel::gaussian_mean(theta).unwrap()
    }

    fn scenario(actual: f64, n: usize) -> MisspecScenario {
        let obj = PrincipalObjective::fdr(0.25).unwrap();
        let designed = gm(1.0);
        let menu = build_fixed_reward(100.0, &linspace(0.43, 0.86, n), &obj, &designed).unwrap();
        MisspecScenario::new(designed, gm(actual), obj, menu).unwrap()
    }

    #[test]
    fn correct_specification_has_no_gap() {
        let s = scenario(1.0, 64);
        for &p in &s.menu.support()[1..63] {
            assert!(fdr_gap(p, p, &s).unwrap().abs() < 1e-9);
            assert!(fdr_gap_fixed_reward(p, &s).unwrap().abs() < 1e-9);
            assert!((implied_true_type(p, &s).unwrap() - p).abs() < 1e-12);
        }
        let rows = sensitivity_sweep(&s, &default_p_grid(&s, 32)).unwrap();
        assert!(rows.iter().all(|r| r.gap.unwrap().abs() < 1e-9));
    }

    #[test]
    fn truthful_report_under_correct_specification() {
        let s = scenario(1.0, 256);
        for q in [0.5, 0.65, 0.8] {
            let r = misspecified_report(q, &s).unwrap();
            assert!(r.interior);
            assert!((r.report - q).abs() < 1e-6);
        }
    }

    #[test]
    fn gap_matches_definition() {
        let s = scenario(1.2, 32);
        let a = gm(1.2);
        for &p in &s.menu.support()[3..9] {
            for q in [0.3, 0.55, 0.9] {
                let tau = s.menu.contract_for(p).unwrap().tau;
                let want = (1.0 - p) / p * gm(1.0).power(tau) - (1.0 - q) / q * a.power(tau);
                assert!((fdr_gap(q, p, &s).unwrap() - want).abs() < 1e-15);
            }
        }
        assert!(fdr_gap(0.0, 0.5, &s).is_err());
        assert!(fdr_gap(0.5, 1.0, &s).is_err());
    }

    #[test]
    fn gap_sign_matches_actual_fdr() {
        for theta in [0.7, 0.9, 1.1, 1.2] {
            let s = scenario(theta, 64);
            for &p in &s.menu.support()[..63] {
                let tau = s.menu.contract_for(p).unwrap().tau;
                for q in linspace(0.3, 0.95, 14) {
                    if fdr_gap(q, p, &s).unwrap() <= 0.0 {
                        assert!(fdr(q, tau, &s.actual) <= 0.25 + 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_definitional_gap() {
        for theta in [0.8, 1.1] {
            let s = scenario(theta, 128);
            for &p in &s.menu.support()[2..126] {
                let Ok(closed) = fdr_gap_fixed_reward(p, &s) else {
                    continue;
                };
                let q = implied_true_type(p, &s).unwrap();
                assert!(s.stationarity_residual(q, p).unwrap().abs() < 1e-9);
                let tau = s.threshold(p).unwrap();
                assert!((closed - gap_at(q, p, tau, &s)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn misreport_matches_grid_argmax() {
        let s = scenario(1.1, 1024);
        let cell = (0.86 - 0.43) / 1023.0;
        let r = misspecified_report(0.7, &s).unwrap();
        assert!(r.interior);
        assert!((r.report - r.grid_report).abs() <= cell + 1e-12, "{r:?}");
    }

    #[test]
    fn underpowered_agents_near_bottom_report_lower() {
        let s = scenario(0.9, 1024);
        let q = 0.45;
        let r = misspecified_report(q, &s).unwrap();
        assert!(r.report < q, "{r:?}");
        assert!(r.grid_report < q);
    }

    #[test]
    fn overpowered_gap_small() {
        for theta in [1.1, 1.2] {
            let s = scenario(theta, 256);
            let rows = sensitivity_sweep(&s, &default_p_grid(&s, 256)).unwrap();
            for r in rows.iter().filter(|r| r.p < 0.6) {
                if let Some(g) = r.gap {
                    assert!(g <= 0.0, "theta={theta} p={} gap={g}", r.p);
                }
            }
            let max = rows.iter().filter_map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
            assert!(max <= 0.002, "{max}");
        }
    }

    /// Worst gap when the menu is designed at `design` over the types whose
    /// thresholds fall in [0.001, 0.31], faced by each alternative in `others`.
    fn worst_gap(design: f64, others: &[f64]) -> f64 {
        let obj = PrincipalObjective::fdr(0.25).unwrap();
        let d = gm(design);
        let (q_lo, tau_bar) = crate::builders::elicitable_range(&obj, &d).unwrap();
        let lo = crate::objectives::type_for_threshold(tau_bar.min(0.31), &obj, &d)
            .unwrap()
            .max(q_lo)
            + 1e-9;
        let hi = crate::objectives::type_for_threshold(0.001, &obj, &d).unwrap();
        let menu = build_fixed_reward(100.0, &linspace(lo, hi, 128), &obj, &d).unwrap();
        others
            .iter()
            .map(|&t| {
                let s = MisspecScenario::new(d.clone(), gm(t), obj, menu.clone()).unwrap();
                let rows = sensitivity_sweep(&s, &default_p_grid(&s, 128)).unwrap();
                rows.iter().filter_map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn weakest_design_limits_worst_gap() {
        let weak = worst_gap(0.6, &[0.8, 1.0, 1.2, 2.0]);
        let strong = worst_gap(2.0, &[0.6, 0.8, 1.0, 1.2]);
        assert!(weak < 0.1, "{weak}");
        assert!(strong > 4.0 * weak, "{strong} vs {weak}");
    }

    #[test]
    fn rejects_varying_reward_menu() {
        let m = gm(1.0);
        let c1 = crate::contracts::Contract::new(0.2, 10.0, 1.0).unwrap();
        let c2 = crate::contracts::Contract::new(0.1, 20.0, 1.0).unwrap();
        let menu = Menu::new(vec![0.5, 0.6], vec![c1, c2]).unwrap();
        assert!(MisspecScenario::new(m.clone(), m, PrincipalObjective::fdr(0.25).unwrap(), menu).is_err());
    }
}
