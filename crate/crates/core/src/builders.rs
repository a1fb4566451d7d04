//! Menu constructions: from a convex potential, varying-reward, fixed-reward
//! and the finite-type backward recursion; plus the elicitable range and the
//! fixed-cost feasibility test.

use rayon::prelude::*;
use serde::Serialize;

use crate::contracts::{Contract, Menu};
use crate::error::{invalid, Error, Result};
use crate::objectives::{thresholds_for, type_for_threshold, type_threshold, PrincipalObjective};
use crate::quadrature::adaptive_simpson;
use crate::test_model::TestModel;

/// Absolute tolerance for the tail integrals that enter menu costs.
pub const INTEGRAL_TOL: f64 = 1e-10;

/// Step for the central difference of the threshold map.
pub const THRESHOLD_FD_STEP: f64 = 1e-5;

/// Default cost position inside the finite-type interval.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialRepresentation {
    ClosedFormVaryingReward,
    ClosedFormFixedReward,
    Tabulated,
}

/// Convex potential sampled on a support: value G(p) and subgradient g*_p.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GPotential {
    pub support: Vec<f64>,
    pub values: Vec<f64>,
    pub subgradients: Vec<f64>,
    pub representation: PotentialRepresentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialCheck {
    /// min over q ≠ p of G(q) − G(p) − g*_p(q − p).
    pub min_supporting_gap: f64,
    pub max_subgradient: f64,
    /// G at the largest support point.
    pub boundary_value: f64,
}

impl PotentialCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_supporting_gap > -tol && self.max_subgradient < 0.0 && self.boundary_value >= -tol
    }
}

impl GPotential {
    pub fn tabulated(support: Vec<f64>, values: Vec<f64>, subgradients: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != values.len() || support.len() != subgradients.len() {
            return Err(invalid(
                "potential support, values and subgradients must be nonempty and aligned",
            ));
        }
        if support.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("potential support must be strictly increasing"));
        }
        let g = Self {
            support,
            values,
            subgradients,
            representation: PotentialRepresentation::Tabulated,
        };
        g.validate(0.0)?;
        Ok(g)
    }

    pub fn check(&self) -> PotentialCheck {
        check_potential(self)
    }

    /// Errors unless g* < 0, the supporting-line property holds strictly up
    /// to `tol`, and G(q̄) ≥ −tol.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let c = self.check();
        if !(c.max_subgradient < 0.0) {
            return Err(Error::ConditionViolated(format!(
                "subgradients must be negative, found {}",
                c.max_subgradient
            )));
        }
        if self.support.len() > 1 && !(c.min_supporting_gap > -tol) {
            return Err(Error::ConditionViolated(format!(
                "supporting-line property fails by {}",
                -c.min_supporting_gap
            )));
        }
        if !(c.boundary_value >= -tol) {
            return Err(Error::ConditionViolated(format!(
                "potential at the worst type is {}, expected >= 0",
                c.boundary_value
            )));
        }
        Ok(())
    }
}

pub fn check_potential(g: &GPotential) -> PotentialCheck {
    let n = g.support.len();
    let min_gap = (0..n)
        .into_par_iter()
        .map(|i| {
            let (p, gp, sp) = (g.support[i], g.values[i], g.subgradients[i]);
            (0..n)
                .filter(|&j| j != i)
                .map(|j| g.values[j] - gp - sp * (g.support[j] - p))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    PotentialCheck {
        min_supporting_gap: min_gap,
        max_subgradient: g.subgradients.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        boundary_value: *g.values.last().expect("nonempty"),
    }
}

/// Potential implied by a menu: G(p) = Ψ(p;p), g*_p = R_p(τ_p − β₁(τ_p)).
pub fn recover_potential(menu: &Menu, model: &TestModel) -> GPotential {
    let (values, subgradients) = menu
        .iter()
        .map(|(p, c)| (c.utility(p, model), c.utility_slope(model)))
        .unzip();
    GPotential {
        support: menu.support().to_vec(),
        values,
        subgradients,
        representation: PotentialRepresentation::Tabulated,
    }
}

/// R_p = g*_p/(τ_p − β₁(τ_p)), c_p = g*_p[β₁(τ_p)/(τ_p − β₁(τ_p)) + p] − G(p).
pub fn build_from_potential(g: &GPotential, thresholds: &[(f64, f64)], model: &TestModel) -> Result<Menu> {
    if thresholds.len() != g.support.len() {
        return Err(invalid("thresholds must align with the potential support"));
    }
    g.validate(INTEGRAL_TOL)?;
    let mut contracts = Vec::with_capacity(thresholds.len());
    for (i, &(p, tau)) in thresholds.iter().enumerate() {
        if (p - g.support[i]).abs() > 1e-12 {
            return Err(invalid(format!(
                "threshold type {p} does not match potential type {}",
                g.support[i]
            )));
        }
        let b1 = model.power(tau);
        let d = model.type_one_error(tau) - b1;
        if !(d < 0.0) {
            return Err(Error::ConditionViolated(format!(
                "power {b1} at threshold {tau} does not exceed the type I error"
            )));
        }
        let slope = g.subgradients[i];
        let contract = Contract::new(tau, slope / d, slope * (b1 / d + p) - g.values[i])?;
        contracts.push(contract.with_nonnegative_utility(p, model));
    }
    Menu::new(g.support.clone(), contracts)
}

/// Screening schedule ε on [0, q̄]: positive and strictly decreasing with ε(q̄) = 0.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonSchedule {
    /// ε(z) = η[(1 − z)² − (1 − q̄)²].
    Quadratic { eta: f64, qbar: f64 },
    /// Piecewise-linear through `(z, ε)` knots ending at (q̄, 0).
    Tabulated { z: Vec<f64>, eps: Vec<f64> },
}

impl EpsilonSchedule {
    pub fn quadratic(eta: f64, qbar: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid(format!("eta must be positive, got {eta}")));
        }
        if !(qbar > 0.0 && qbar < 1.0) {
            return Err(invalid(format!("worst type must lie in (0, 1), got {qbar}")));
        }
        Ok(Self::Quadratic { eta, qbar })
    }

    pub fn tabulated(z: Vec<f64>, eps: Vec<f64>) -> Result<Self> {
        if z.len() < 2 || z.len() != eps.len() {
            return Err(invalid("epsilon table needs at least two aligned points"));
        }
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("epsilon grid must be strictly increasing"));
        }
        if *eps.last().unwrap() != 0.0 {
            return Err(invalid("epsilon must vanish at the worst type"));
        }
        if eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("epsilon must be strictly decreasing"));
        }
        Ok(Self::Tabulated { z, eps })
    }

    pub fn qbar(&self) -> f64 {
        match self {
            Self::Quadratic { qbar, .. } => *qbar,
            Self::Tabulated { z, .. } => *z.last().unwrap(),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Self::Quadratic { eta, qbar } => eta * ((1.0 - z).powi(2) - (1.0 - qbar).powi(2)),
            Self::Tabulated { z: zs, eps } => {
                let k = zs.partition_point(|&x| x <= z).clamp(1, zs.len() - 1);
                let (z0, z1, e0, e1) = (zs[k - 1], zs[k], eps[k - 1], eps[k]);
                e0 + (e1 - e0) * (z - z0) / (z1 - z0)
            }
        }
    }

    fn domain_start(&self) -> f64 {
        match self {
            Self::Quadratic { .. } => 0.0,
            Self::Tabulated { z, .. } => z[0],
        }
    }
}

/// ∫_{p_i}^{q̄} f for every support point, integrated segment by segment.
fn tail_integrals<F: Fn(f64) -> f64 + Sync>(support: &[f64], qbar: f64, f: F) -> Vec<f64> {
    let mut ends = support.to_vec();
    ends.push(qbar);
    let pieces: Vec<f64> = ends
        .par_windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], INTEGRAL_TOL / support.len() as f64))
        .collect();
    let mut out = vec![0.0; support.len()];
    let mut acc = 0.0;
    for i in (0..support.len()).rev() {
        acc += pieces[i];
        out[i] = acc;
    }
    out
}

fn check_support_below(support: &[f64], qbar: f64) -> Result<()> {
    if support.is_empty() {
        return Err(invalid("support is empty"));
    }
    if support.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("support must be strictly increasing"));
    }
    if *support.last().unwrap() > qbar + 1e-12 {
        return Err(invalid(format!("support extends beyond the worst type {qbar}")));
    }
    Ok(())
}

/// Varying-reward menu anchored at the worst-type base contract:
/// R_p = R̄Δ̄(1 + ε(p))/Δ_p and c_p = R_p[pτ_p + (1 − p)β₁(τ_p)] − R̄Δ̄∫_p^{q̄}(1 + ε),
/// where Δ = β₁(τ) − τ.
pub fn build_varying_reward(
    base: &Contract,
    eps: &EpsilonSchedule,
    thresholds: &[(f64, f64)],
    model: &TestModel,
) -> Result<Menu> {
    let (menu, _) = varying_reward_parts(base, eps, thresholds, model)?;
    Ok(menu)
}

/// Potential G(q) = R̄Δ̄∫_q^{q̄}(1 + ε) of the varying-reward menu.
pub fn varying_reward_potential(
    base: &Contract,
    eps: &EpsilonSchedule,
    thresholds: &[(f64, f64)],
    model: &TestModel,
) -> Result<GPotential> {
    let (_, g) = varying_reward_parts(base, eps, thresholds, model)?;
    Ok(g)
}

fn varying_reward_parts(
    base: &Contract,
    eps: &EpsilonSchedule,
    thresholds: &[(f64, f64)],
    model: &TestModel,
) -> Result<(Menu, GPotential)> {
    let qbar = eps.qbar();
    let support: Vec<f64> = thresholds.iter().map(|t| t.0).collect();
    check_support_below(&support, qbar)?;
    if support[0] < eps.domain_start() {
        return Err(invalid("support starts below the epsilon schedule's domain"));
    }
    let participation = base.utility(qbar, model);
    if participation.abs() > 1e-8 {
        return Err(Error::ConditionViolated(format!(
            "base contract gives the worst type utility {participation}, expected 0"
        )));
    }
    let k = base.reward * (model.power(base.tau) - base.tau);
    if !(k > 0.0) {
        return Err(Error::ConditionViolated(
            "base contract has no positive power margin".into(),
        ));
    }
    let tails = tail_integrals(&support, qbar, |z| 1.0 + eps.eval(z));
    let mut contracts = Vec::with_capacity(support.len());
    let mut values = Vec::with_capacity(support.len());
    let mut slopes = Vec::with_capacity(support.len());
    for (i, &(p, tau)) in thresholds.iter().enumerate() {
        let b1 = model.power(tau);
        let delta = b1 - tau;
        if !(delta > 0.0) {
            return Err(Error::ConditionViolated(format!(
                "type {p} has threshold {tau} with no power margin"
            )));
        }
        let weight = 1.0 + eps.eval(p);
        let reward = k * weight / delta;
        let g = k * tails[i];
        let cost = reward * (p * tau + (1.0 - p) * b1) - g;
        contracts.push(Contract::new(tau, reward, cost)?.with_nonnegative_utility(p, model));
        values.push(g);
        slopes.push(-k * weight);
    }
    let potential = GPotential {
        support: support.clone(),
        values,
        subgradients: slopes,
        representation: PotentialRepresentation::ClosedFormVaryingReward,
    };
    Ok((Menu::new(support, contracts)?, potential))
}

/// Largest threshold with β₁′ > 1 and the type it is assigned to.
pub fn elicitable_range(objective: &PrincipalObjective, model: &TestModel) -> Result<(f64, f64)> {
    let tau_bar = model.steep_threshold_bound();
    let q_lo = type_for_threshold(tau_bar, objective, model)?;
    Ok((q_lo, tau_bar))
}

fn fdr_objective(objective: &PrincipalObjective) -> Result<()> {
    match objective {
        PrincipalObjective::Fdr { .. } => Ok(()),
        PrincipalObjective::Bayes { .. } => Err(invalid("fixed-reward menus need an fdr objective")),
    }
}

/// Checks concavity, β₁′(τ_q) > 1 and strictly decreasing thresholds on the
/// support, returning the thresholds.
fn fixed_reward_thresholds(
    support: &[f64],
    objective: &PrincipalObjective,
    model: &TestModel,
) -> Result<Vec<(f64, f64)>> {
    fdr_objective(objective)?;
    if support.is_empty() || support.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("support must be nonempty and strictly increasing"));
    }
    if !(support[0] > 0.0 && *support.last().unwrap() < 1.0) {
        return Err(invalid("support must lie inside (0, 1)"));
    }
    if !model.is_concave() {
        return Err(Error::ConditionViolated("power function is not concave".into()));
    }
    let (q_lo, _) = elicitable_range(objective, model)?;
    if support[0] < q_lo - 1e-9 {
        return Err(Error::Infeasible {
            message: format!(
                "lower type {} is below the elicitable bound for a fixed-reward menu",
                support[0]
            ),
            bound: q_lo,
        });
    }
    let map = thresholds_for(support, objective, model)?;
    for &(q, tau) in &map {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::ConditionViolated(format!(
                "type {q} has boundary threshold {tau}"
            )));
        }
        if !(model.power_derivative(tau) > 1.0 - 1e-9) {
            return Err(Error::ConditionViolated(format!(
                "power slope at threshold {tau} of type {q} is not above 1"
            )));
        }
    }
    if let Some(w) = map.windows(2).find(|w| !(w[1].1 < w[0].1)) {
        return Err(Error::ConditionViolated(format!(
            "thresholds are not strictly decreasing between q={} and q={}",
            w[0].0, w[1].0
        )));
    }
    Ok(map)
}

/// Constant-reward menu on `support` (worst type = last point):
/// c_p = R[pτ_p + (1 − p)β₁(τ_p)] − R∫_p^{q̄}(β₁(τ_z) − τ_z)dz.
pub fn build_fixed_reward(
    reward: f64,
    support: &[f64],
    objective: &PrincipalObjective,
    model: &TestModel,
) -> Result<Menu> {
    let g = fixed_reward_potential(reward, support, objective, model)?;
    let mut contracts = Vec::with_capacity(support.len());
    for (i, &p) in support.iter().enumerate() {
        let tau = type_threshold(p, objective, model)?;
        let b1 = model.power(tau);
        let cost = reward * (p * tau + (1.0 - p) * b1) - g.values[i];
        contracts.push(Contract::new(tau, reward, cost)?.with_nonnegative_utility(p, model));
    }
    Menu::new(support.to_vec(), contracts)
}

/// G(q) = R∫_q^{q̄}(β₁(τ_z) − τ_z)dz with g*_q = R(τ_q − β₁(τ_q)).
pub fn fixed_reward_potential(
    reward: f64,
    support: &[f64],
    objective: &PrincipalObjective,
    model: &TestModel,
) -> Result<GPotential> {
    if !(reward > 0.0 && reward.is_finite()) {
        return Err(invalid(format!("reward must be positive, got {reward}")));
    }
    let map = fixed_reward_thresholds(support, objective, model)?;
    let qbar = *support.last().unwrap();
    let margin = |z: f64| {
        let tau = type_threshold(z, objective, model).unwrap_or(0.0);
        model.power(tau) - tau
    };
    let tails = tail_integrals(support, qbar, margin);
    Ok(GPotential {
        support: support.to_vec(),
        values: tails.iter().map(|t| reward * t).collect(),
        subgradients: map.iter().map(|&(_, tau)| reward * (tau - model.power(tau))).collect(),
        representation: PotentialRepresentation::ClosedFormFixedReward,
    })
}

/// G″(q) = R(1 − β₁′(τ_q))τ′_q with τ′ by central differences.
pub fn fixed_reward_curvature(reward: f64, q: f64, objective: &PrincipalObjective, model: &TestModel) -> Result<f64> {
    let h = THRESHOLD_FD_STEP;
    let tau = type_threshold(q, objective, model)?;
    let slope = (type_threshold(q + h, objective, model)? - type_threshold(q - h, objective, model)?) / (2.0 * h);
    Ok(reward * (1.0 - model.power_derivative(tau)) * slope)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMenuBuild {
    pub menu: Menu,
    /// Cost interval [ℓ_t, r_t] used for contract t−1, for t = 2..N.
    pub intervals: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Backward recursion over finitely many types. `eps` holds ε_t for
/// t = 2..N (length N − 1); `terminal` is (R_N, c_N).
pub fn build_finite_menu(
    types: &[f64],
    thresholds: &[f64],
    terminal: (f64, f64),
    eps: &[f64],
    lambda: f64,
    model: &TestModel,
) -> Result<FiniteMenuBuild> {
    let n = types.len();
    if n == 0 || thresholds.len() != n {
        return Err(invalid("types and thresholds must be nonempty and aligned"));
    }
    if types.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("types must be strictly increasing"));
    }
    if eps.len() != n - 1 {
        return Err(invalid(format!("expected {} epsilon values, got {}", n - 1, eps.len())));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0)) {
        return Err(invalid(format!("epsilon values must be positive, got {e}")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let mut warnings = Vec::new();
    if lambda == 0.0 || lambda == 1.0 {
        warnings.push(format!(
            "lambda = {lambda} puts each cost on an interval endpoint; adjacent types are exactly indifferent"
        ));
    }
    let (r_n, c_n) = terminal;
    let last = Contract::new(thresholds[n - 1], r_n, c_n)?;
    let u = last.utility(types[n - 1], model);
    if u < 0.0 {
        return Err(Error::ConditionViolated(format!(
            "terminal contract gives type {} utility {u} < 0",
            types[n - 1]
        )));
    }
    let delta = |tau: f64| model.power(tau) - tau;
    let mut contracts = vec![last; n];
    let mut intervals = Vec::with_capacity(n - 1);
    for t in (1..n).rev() {
        let cur = contracts[t];
        let (tau_t, tau_prev) = (thresholds[t], thresholds[t - 1]);
        let (d_t, d_prev) = (delta(tau_t), delta(tau_prev));
        if !(d_t > 0.0 && d_prev > 0.0) {
            return Err(Error::ConditionViolated(format!(
                "thresholds {tau_prev} and {tau_t} need power strictly above the type I error"
            )));
        }
        let reward = cur.reward * d_t / d_prev + eps[t - 1];
        let k = cur.reward * d_t - reward * d_prev;
        let b = reward * model.power(tau_prev) - cur.reward * model.power(tau_t) + cur.cost;
        let lower = types[t] * k + b;
        let upper = types[t - 1] * k + b;
        if !(upper > lower) {
            return Err(Error::EmptyInterval {
                step: t + 1,
                lower,
                upper,
            });
        }
        intervals.push((lower, upper));
        contracts[t - 1] = Contract::new(tau_prev, reward, lower + lambda * (upper - lower))?;
    }
    intervals.reverse();
    Ok(FiniteMenuBuild {
        menu: Menu::new(types.to_vec(), contracts)?,
        intervals,
        warnings,
    })
}

/// β₁(τ₁)/τ₁ > β₁(τ₂)/τ₂ for τ₁ > τ₂: whether two thresholds can share a cost.
pub fn fixed_cost_feasible(tau1: f64, tau2: f64, model: &TestModel) -> Result<bool> {
    if tau1 == tau2 {
        return Err(invalid("thresholds must differ"));
    }
    if !(0.0 < tau2 && tau2 < tau1 && tau1 <= 1.0) {
        return Err(invalid(format!("need 0 < tau2 < tau1 <= 1, got ({tau1}, {tau2})")));
    }
    Ok(model.power(tau1) / tau1 > model.power(tau2) / tau2)
}
