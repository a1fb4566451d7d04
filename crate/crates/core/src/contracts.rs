//! Contracts, menus, agent utility and separation checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::test_model::TestModel;

/// Default strict-inequality margin for incentive compatibility checks.
pub const DEFAULT_IC_MARGIN: f64 = 1e-9;

/// Tolerance used to match a requested type against menu support points.
const SUPPORT_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub tau: f64,
    pub reward: f64,
    pub cost: f64,
}

impl Contract {
    pub fn new(tau: f64, reward: f64, cost: f64) -> Result<Self> {
        let c = Self { tau, reward, cost };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(invalid(format!("threshold {} outside [0, 1]", self.tau)));
        }
        if !(self.reward >= 0.0) || !self.reward.is_finite() {
            return Err(invalid(format!(
                "reward {} must be finite and nonnegative",
                self.reward
            )));
        }
        if !self.cost.is_finite() {
            return Err(invalid(format!("cost {} must be finite", self.cost)));
        }
        Ok(())
    }

    /// Ψ(q) = qR(τ − β₁(τ)) + Rβ₁(τ) − c.
    pub fn utility(&self, q: f64, model: &TestModel) -> f64 {
        let b0 = model.type_one_error(self.tau);
        let b1 = model.power(self.tau);
        q * self.reward * (b0 - b1) + (self.reward * b1 - self.cost)
    }

    /// Lowers the cost by the rounding residual so that type `q` gets
    /// utility of at least zero when it is meant to be exactly zero.
    pub fn with_nonnegative_utility(mut self, q: f64, model: &TestModel) -> Self {
        for _ in 0..8 {
            let u = self.utility(q, model);
            if u >= 0.0 {
                break;
            }
            self.cost = (self.cost + u).min(next_down(self.cost));
        }
        self
    }

    /// Slope of the utility in q, R(τ − β₁(τ)).
    pub fn utility_slope(&self, model: &TestModel) -> f64 {
        self.reward * (model.type_one_error(self.tau) - model.power(self.tau))
    }
}

fn next_down(x: f64) -> f64 {
    if x == 0.0 {
        -f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// Agent utility under a single contract.
pub fn utility(q: f64, contract: &Contract, model: &TestModel) -> f64 {
    contract.utility(q, model)
}

/// Contracts indexed by a strictly increasing list of reported types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMenu")]
pub struct Menu {
    support: Vec<f64>,
    contracts: Vec<Contract>,
}

#[derive(Deserialize)]
struct RawMenu {
    support: Vec<f64>,
    contracts: Vec<Contract>,
}

impl TryFrom<RawMenu> for Menu {
    type Error = crate::Error;

    fn try_from(raw: RawMenu) -> Result<Self> {
        Menu::new(raw.support, raw.contracts)
    }
}

impl Menu {
    pub fn new(support: Vec<f64>, contracts: Vec<Contract>) -> Result<Self> {
        if support.is_empty() {
            return Err(invalid("menu support is empty"));
        }
        if support.len() != contracts.len() {
            return Err(invalid(format!(
                "support has {} types but {} contracts were given",
                support.len(),
                contracts.len()
            )));
        }
        if support.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("menu support must lie in [0, 1]"));
        }
        if support.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("menu support must be strictly increasing"));
        }
        for c in &contracts {
            c.validate()?;
        }
        Ok(Self { support, contracts })
    }

    pub fn singleton(p: f64, contract: Contract) -> Result<Self> {
        Self::new(vec![p], vec![contract])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn contracts(&self) -> &[Contract] {
        &self.contracts
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Contract)> + '_ {
        self.support.iter().copied().zip(self.contracts.iter())
    }

    /// The contract for the worst (largest) supported type.
    pub fn worst_type_entry(&self) -> (f64, Contract) {
        let last = self.len() - 1;
        (self.support[last], self.contracts[last])
    }

    /// Index of the support point matching `p`.
    pub fn index_of(&self, p: f64) -> Option<usize> {
        let i = self.support.partition_point(|&s| s < p - SUPPORT_MATCH_TOL);
        (i < self.len() && (self.support[i] - p).abs() <= SUPPORT_MATCH_TOL).then_some(i)
    }

    pub fn contract_for(&self, p: f64) -> Result<&Contract> {
        self.index_of(p)
            .map(|i| &self.contracts[i])
            .ok_or_else(|| invalid(format!("type {p} is not in the menu support")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionOutcome {
    Participate { index: usize, report: f64, utility: f64 },
    OptOut { best_utility: f64 },
}

impl SelectionOutcome {
    pub fn report(&self) -> Option<f64> {
        match self {
            Self::Participate { report, .. } => Some(*report),
            Self::OptOut { .. } => None,
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Self::Participate { index, .. } => Some(*index),
            Self::OptOut { .. } => None,
        }
    }

    pub fn utility(&self) -> f64 {
        match self {
            Self::Participate { utility, .. } => *utility,
            Self::OptOut { .. } => 0.0,
        }
    }
}

/// Utility-maximizing contract for type q. Ties go to the smallest reported
/// type; the agent opts out only when the best utility is strictly negative.
pub fn select(q: f64, menu: &Menu, model: &TestModel) -> SelectionOutcome {
    let mut best = 0;
    let mut best_u = menu.contracts[0].utility(q, model);
    for (i, c) in menu.contracts.iter().enumerate().skip(1) {
        let u = c.utility(q, model);
        if u > best_u {
            best = i;
            best_u = u;
        }
    }
    if best_u < 0.0 {
        SelectionOutcome::OptOut { best_utility: best_u }
    } else {
        SelectionOutcome::Participate {
            index: best,
            report: menu.support[best],
            utility: best_u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Type `true_type` strictly prefers (up to the margin) the contract for `report`.
    IncentiveCompatibility {
        true_type: f64,
        report: f64,
        truthful_utility: f64,
        deviation_utility: f64,
    },
    Participation {
        true_type: f64,
        utility: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub passed: bool,
    /// Description of the type grid the check ran on.
    pub grid: String,
    pub margin: f64,
    pub pairs_checked: usize,
    /// min over q ≠ p of Ψ(q;q) − Ψ(q;p).
    pub min_ic_gap: f64,
    /// min over q of Ψ(q;q).
    pub min_truthful_utility: f64,
    /// Pairs whose IC gap is within the margin of zero (tie-break decides).
    pub near_ties: usize,
    pub first_violation: Option<Violation>,
}

/// Checks Ψ(q;q) > Ψ(q;p) + margin against every other menu entry and
/// Ψ(q;q) ≥ 0 for each q in `support`.
pub fn verify_separating(menu: &Menu, support: &[f64], model: &TestModel, margin: f64) -> Result<SeparationReport> {
    if support.is_empty() {
        return Err(invalid("verification support is empty"));
    }
    let idx = support
        .iter()
        .map(|&q| {
            menu.index_of(q)
                .ok_or_else(|| invalid(format!("type {q} is not in the menu support")))
        })
        .collect::<Result<Vec<_>>>()?;

    struct Row {
        min_gap: f64,
        truthful: f64,
        ties: usize,
        violation: Option<Violation>,
    }
    let rows: Vec<Row> = idx
        .par_iter()
        .map(|&i| {
            let q = menu.support[i];
            let own = menu.contracts[i].utility(q, model);
            let mut row = Row {
                min_gap: f64::INFINITY,
                truthful: own,
                ties: 0,
                violation: None,
            };
            if own < 0.0 {
                row.violation = Some(Violation::Participation {
                    true_type: q,
                    utility: own,
                });
            }
            for (j, c) in menu.contracts.iter().enumerate() {
                if j == i {
                    continue;
                }
                let other = c.utility(q, model);
                let gap = own - other;
                row.min_gap = row.min_gap.min(gap);
                if gap.abs() <= margin {
                    row.ties += 1;
                }
                if gap <= margin && row.violation.is_none() {
                    row.violation = Some(Violation::IncentiveCompatibility {
                        true_type: q,
                        report: menu.support[j],
                        truthful_utility: own,
                        deviation_utility: other,
                    });
                }
            }
            row
        })
        .collect();

    let first_violation = rows.iter().find_map(|r| r.violation);
    let lo = support.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = support.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SeparationReport {
        passed: first_violation.is_none(),
        grid: format!(
            "{} types on [{lo}, {hi}] against {} menu entries",
            support.len(),
            menu.len()
        ),
        margin,
        pairs_checked: support.len() * (menu.len() - 1),
        min_ic_gap: rows.iter().map(|r| r.min_gap).fold(f64::INFINITY, f64::min),
        min_truthful_utility: rows.iter().map(|r| r.truthful).fold(f64::INFINITY, f64::min),
        near_ties: rows.iter().map(|r| r.ties).sum(),
        first_violation,
    })
}

/// [`verify_separating`] over the full menu support with the default margin.
pub fn verify_menu(menu: &Menu, model: &TestModel) -> SeparationReport {
    verify_separating(menu, menu.support(), model, DEFAULT_IC_MARGIN)
        .expect("menu support is nonempty and self-indexed")
}

/// S(p, Y): Rβ₀(τ_p) − c_p when the null holds (Y = 1), Rβ₁(τ_p) − c_p otherwise.
pub fn scoring_rule(menu: &Menu, p: f64, null_outcome: bool, model: &TestModel) -> Result<f64> {
    let c = menu.contract_for(p)?;
    let approve = if null_outcome {
        model.type_one_error(c.tau)
    } else {
        model.power(c.tau)
    };
    Ok(c.reward * approve - c.cost)
}

/// S(p; q) = q·S(p, 1) + (1 − q)·S(p, 0).
pub fn expected_score(menu: &Menu, p: f64, q: f64, model: &TestModel) -> Result<f64> {
    Ok(q * scoring_rule(menu, p, true, model)? + (1.0 - q) * scoring_rule(menu, p, false, model)?)
}

/// Whether S(q; q) > S(p; q) + margin for all q ≠ p on `support`.
pub fn is_strictly_proper(menu: &Menu, support: &[f64], model: &TestModel, margin: f64) -> Result<bool> {
    for &q in support {
        let own = expected_score(menu, q, q, model)?;
        for &p in support {
            if p != q && own <= expected_score(menu, p, q, model)? + margin {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gm(theta: f64) -> TestModel {
        TestModel::gaussian_mean(theta).unwrap()
    }

    /// Menu from the convex potential G(q) = a(q − q̄)² + b(q̄ − q) with
    /// thresholds on a decreasing line; written out independently of the builders.
    fn quadratic_menu(model: &TestModel, support: &[f64]) -> Menu {
        let qbar = *support.last().unwrap();
        let contracts = support
            .iter()
            .map(|&p| {
                let tau = 0.4 - 0.35 * p;
                let g = 2.0 * (p - qbar) - 1.0;
                let gp = (p - qbar).powi(2) + (qbar - p);
                let d = tau - model.power(tau);
                let reward = g / d;
                let cost = g * (model.power(tau) / d + p) - gp;
                Contract::new(tau, reward, cost)
                    .unwrap()
                    .with_nonnegative_utility(p, model)
            })
            .collect();
        Menu::new(support.to_vec(), contracts).unwrap()
    }

    #[test]
    fn utility_reference_cases() {
        let m = gm(1.0);
        let base = Contract::new(0.004, 100.0, 1.3).unwrap();
        assert!(base.utility(0.8, &m).abs() < 0.01);
        let free = Contract::new(0.3, 0.0, 2.5).unwrap();
        assert_eq!(free.utility(0.4, &m), -2.5);
        let always = Contract::new(1.0, 7.0, 2.0).unwrap();
        assert!((always.utility(0.6, &m) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn contract_validation() {
        assert!(Contract::new(1.2, 1.0, 0.0).is_err());
        assert!(Contract::new(0.5, -1.0, 0.0).is_err());
        assert!(Contract::new(0.5, 1.0, f64::NAN).is_err());
        let c = Contract {
            tau: 0.1,
            reward: 1.0,
            cost: 0.0,
        };
        assert!(Menu::new(vec![], vec![]).is_err());
        assert!(Menu::new(vec![0.5, 0.4], vec![c, c]).is_err());
        assert!(Menu::new(vec![0.5], vec![c, c]).is_err());
    }

    #[test]
    fn select_cases() {
        let m = gm(1.0);
        let base = Contract::new(0.004, 100.0, 1.3).unwrap();
        let single = Menu::singleton(0.8, base).unwrap();
        assert_eq!(select(0.1, &single, &m).report(), Some(0.8));
        assert_eq!(select(0.99, &single, &m).report(), None);

        let support = [0.3, 0.45, 0.6];
        let menu = quadratic_menu(&m, &support);
        for (i, &q) in support.iter().enumerate() {
            assert_eq!(select(q, &menu, &m).index(), Some(i));
        }
    }

    #[test]
    fn select_tie_prefers_smallest_type() {
        let m = gm(1.0);
        let c = Contract::new(0.2, 3.0, 0.1).unwrap();
        let menu = Menu::new(vec![0.2, 0.5], vec![c, c]).unwrap();
        assert_eq!(select(0.4, &menu, &m).report(), Some(0.2));
        let zero = Contract::new(0.0, 1.0, 0.0).unwrap();
        let menu = Menu::singleton(0.5, zero).unwrap();
        // Zero utility participates.
        assert_eq!(select(0.5, &menu, &m).report(), Some(0.5));
    }

    #[test]
    fn verify_quadratic_menu() {
        let m = gm(1.0);
        let support: Vec<f64> = (0..8).map(|i| 0.2 + 0.08 * i as f64).collect();
        let menu = quadratic_menu(&m, &support);
        let report = verify_menu(&menu, &m);
        assert!(report.passed, "{report:?}");
        assert!(report.min_ic_gap > 0.0);
        assert!(report.min_truthful_utility.abs() < 1e-12);
        assert!(is_strictly_proper(&menu, &support, &m, DEFAULT_IC_MARGIN).unwrap());

        let mut contracts = menu.contracts().to_vec();
        let (a, b) = (contracts[0].cost, contracts[7].cost);
        contracts[0].cost = b;
        contracts[7].cost = a;
        let broken = Menu::new(support.clone(), contracts).unwrap();
        let report = verify_menu(&broken, &m);
        assert!(!report.passed);
        assert!(report.first_violation.is_some());
        assert!(!is_strictly_proper(&broken, &support, &m, DEFAULT_IC_MARGIN).unwrap());
    }

    #[test]
    fn verify_reports_participation_failure() {
        let m = gm(1.0);
        let c = Contract::new(0.1, 1.0, 5.0).unwrap();
        let menu = Menu::singleton(0.5, c).unwrap();
        let r = verify_menu(&menu, &m);
        assert!(matches!(r.first_violation, Some(Violation::Participation { .. })));
        assert!(verify_separating(&menu, &[0.4], &m, 1e-9).is_err());
    }

    #[test]
    fn scoring_rule_cases() {
        let m = gm(1.0);
        let c = Contract::new(0.0, 10.0, 0.7).unwrap();
        let menu = Menu::singleton(0.5, c).unwrap();
        assert_eq!(scoring_rule(&menu, 0.5, true, &m).unwrap(), -0.7);
        assert!(scoring_rule(&menu, 0.4, true, &m).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = gm(1.7);
        let support: Vec<f64> = (0..6).map(|i| 0.1 + 0.1313 * i as f64).collect();
        let menu = quadratic_menu(&m, &support);
        let back = Menu::from_json(&menu.to_json().unwrap()).unwrap();
        assert_eq!(back, menu);
        assert!(Menu::from_json(r#"{"support":[0.5,0.4],"contracts":[]}"#).is_err());
    }

    proptest! {
        #[test]
        fn score_matches_utility(q in 0.0..1.0f64, idx in 0usize..5, theta in 0.3..3.0f64) {
            let m = gm(theta);
            let support = [0.1, 0.3, 0.5, 0.7, 0.9];
            let menu = quadratic_menu(&m, &support);
            let p = support[idx];
            let s = expected_score(&menu, p, q, &m).unwrap();
            let u = menu.contract_for(p).unwrap().utility(q, &m);
            prop_assert!((s - u).abs() < 1e-12);
        }

        #[test]
        fn utility_affine_with_negative_slope(
            tau in 0.001..0.999f64, reward in 0.1..500.0f64, cost in -10.0..10.0f64,
            q1 in 0.0..1.0f64, q2 in 0.0..1.0f64, theta in 0.3..3.0f64,
        ) {
            let m = gm(theta);
            let c = Contract::new(tau, reward, cost).unwrap();
            let slope = c.utility_slope(&m);
            prop_assert!(slope < 0.0);
            let lhs = c.utility(q2, &m) - c.utility(q1, &m);
            prop_assert!((lhs - slope * (q2 - q1)).abs() < 1e-9 * (1.0 + reward));
        }

        #[test]
        fn utility_nondecreasing_in_tau(
            tau in 0.0..0.99f64, dt in 0.0..0.01f64, q in 0.0..1.0f64, theta in 0.3..3.0f64,
        ) {
            let m = gm(theta);
            let lo = Contract::new(tau, 10.0, 1.0).unwrap();
            let hi = Contract::new(tau + dt, 10.0, 1.0).unwrap();
            prop_assert!(hi.utility(q, &m) >= lo.utility(q, &m) - 1e-12);
        }

        #[test]
        fn dominated_contract_does_not_change_selection(q in 0.2..0.76f64, extra_cost in 0.5..5.0f64) {
            let m = gm(1.0);
            let support = [0.2, 0.4, 0.6, 0.76];
            let menu = quadratic_menu(&m, &support);
            let chosen = select(q, &menu, &m);
            // Copy of the q=0.4 contract with a higher cost, offered as type 0.5.
            let mut contracts = menu.contracts().to_vec();
            let mut dominated = contracts[1];
            dominated.cost += extra_cost;
            contracts.insert(2, dominated);
            let bigger = Menu::new(vec![0.2, 0.4, 0.5, 0.6, 0.76], contracts).unwrap();
            prop_assert_eq!(select(q, &bigger, &m).report(), chosen.report());
        }
    }
}
