//! Principal objectives, the type-optimal threshold map q ↦ τ_q, and the
//! oracle performance obtained when every type receives its own threshold.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::evaluation::{bayes_risk, fdr, tdr};
use crate::quadrature::trapezoid_nodes;
use crate::test_model::TestModel;

/// Lower end of the bisection bracket for FDR thresholds.
pub const FDR_BRACKET_FLOOR: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrincipalObjective {
    /// Minimize ω₀·(type I) + ω₁·(type II).
    Bayes { omega0: f64, omega1: f64 },
    /// Maximize the true discovery rate with FDR at most α.
    Fdr { alpha: f64 },
}

impl PrincipalObjective {
    pub fn bayes(omega0: f64, omega1: f64) -> Result<Self> {
        if !(omega0 >= 0.0 && omega1 >= 0.0) || !(omega0 + omega1 > 0.0) {
            return Err(invalid(format!(
                "error costs must be nonnegative with positive sum, got ({omega0}, {omega1})"
            )));
        }
        Ok(Self::Bayes { omega0, omega1 })
    }

    pub fn fdr(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("FDR budget must lie in (0, 1), got {alpha}")));
        }
        Ok(Self::Fdr { alpha })
    }
}

/// A distribution over prior-null probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum TypePopulation {
    Discrete {
        types: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Uniform density on `[lo, hi]`, integrated by the trapezoid rule on `n` nodes.
    UniformGrid {
        lo: f64,
        hi: f64,
        n: usize,
    },
}

impl TypePopulation {
    pub fn discrete(types: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if types.is_empty() || types.len() != weights.len() {
            return Err(invalid("types and weights must be nonempty and aligned"));
        }
        if types.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(invalid("types must lie in [0, 1]"));
        }
        if types.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("types must be strictly increasing"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self::Discrete { types, weights })
    }

    /// Equal weights on the given types.
    pub fn equally_weighted(types: Vec<f64>) -> Result<Self> {
        let n = types.len().max(1);
        Self::discrete(types, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(q: f64) -> Result<Self> {
        Self::discrete(vec![q], vec![1.0])
    }

    pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(invalid(format!(
                "grid bounds must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"
            )));
        }
        if n < 2 {
            return Err(invalid("uniform grid needs at least two nodes"));
        }
        Ok(Self::UniformGrid { lo, hi, n })
    }

    /// Quadrature nodes `(q, weight)` with weights summing to one.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Discrete { types, weights } => types.iter().copied().zip(weights.iter().copied()).collect(),
            Self::UniformGrid { lo, hi, n } => trapezoid_nodes(*lo, *hi, *n),
        }
    }

    pub fn types(&self) -> Vec<f64> {
        self.nodes().into_iter().map(|(q, _)| q).collect()
    }

    /// sup of the support.
    pub fn worst_type(&self) -> f64 {
        match self {
            Self::Discrete { types, .. } => *types.last().expect("nonempty"),
            Self::UniformGrid { hi, .. } => *hi,
        }
    }

    pub fn integrate<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> f64 {
        let nodes = self.nodes();
        let values: Vec<f64> = nodes.par_iter().map(|&(q, w)| w * f(q)).collect();
        values.iter().sum()
    }
}

/// τ_q = ℒ⁻¹(qω₀ / ((1 − q)ω₁)).
pub fn bayes_threshold(q: f64, omega0: f64, omega1: f64, model: &TestModel) -> Result<f64> {
    if !model.supports_likelihood_ratio() {
        return Err(crate::Error::Unsupported(
            "Bayes thresholds need a likelihood ratio (gaussian_mean model)".into(),
        ));
    }
    check_type(q)?;
    if omega1 == 0.0 || q >= 1.0 {
        return Ok(0.0);
    }
    if q <= 0.0 || omega0 == 0.0 {
        return Ok(1.0);
    }
    model.inverse_likelihood_ratio(q * omega0 / ((1.0 - q) * omega1))
}

/// τ_q = sup{τ : FDR(q, τ) ≤ α}, found by bisection on `[1e-12, 1]`.
///
/// Returns 1 when even τ = 1 meets the budget, 0 for q = 1, and 0 when no
/// threshold above the bracket floor meets it.
pub fn fdr_threshold(q: f64, alpha: f64, model: &TestModel) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    if q >= 1.0 {
        return 0.0;
    }
    if fdr(q, 1.0, model) <= alpha {
        return 1.0;
    }
    let (mut lo, mut hi) = (FDR_BRACKET_FLOOR, 1.0);
    if fdr(q, lo, model) > alpha {
        return 0.0;
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fdr(q, mid, model) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Type-optimal threshold for either objective.
pub fn type_threshold(q: f64, objective: &PrincipalObjective, model: &TestModel) -> Result<f64> {
    match *objective {
        PrincipalObjective::Bayes { omega0, omega1 } => bayes_threshold(q, omega0, omega1, model),
        PrincipalObjective::Fdr { alpha } => {
            check_type(q)?;
            Ok(fdr_threshold(q, alpha, model))
        }
    }
}

/// Per-type thresholds for every node of the population, checked to be
/// non-increasing in q.
pub fn threshold_map(
    population: &TypePopulation,
    objective: &PrincipalObjective,
    model: &TestModel,
) -> Result<Vec<(f64, f64)>> {
    thresholds_for(&population.types(), objective, model)
}

/// [`threshold_map`] over an explicit list of increasing types.
pub fn thresholds_for(types: &[f64], objective: &PrincipalObjective, model: &TestModel) -> Result<Vec<(f64, f64)>> {
    let map = types
        .par_iter()
        .map(|&q| type_threshold(q, objective, model).map(|t| (q, t)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(w) = map.windows(2).find(|w| w[1].1 > w[0].1) {
        return Err(crate::Error::ConditionViolated(format!(
            "threshold map increases between q={} and q={}",
            w[0].0, w[1].0
        )));
    }
    Ok(map)
}

/// Smallest type q whose type-optimal threshold is at most `tau`.
///
/// Inverts the monotone threshold map by bisection on q.
pub fn type_for_threshold(tau: f64, objective: &PrincipalObjective, model: &TestModel) -> Result<f64> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if type_threshold(mid, objective, model)? <= tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// ∫ BR_ω(q, τ_q) dT(q).
pub fn oracle_bayes_risk(
    population: &TypePopulation,
    objective: &PrincipalObjective,
    model: &TestModel,
) -> Result<f64> {
    let (omega0, omega1) = match *objective {
        PrincipalObjective::Bayes { omega0, omega1 } => (omega0, omega1),
        PrincipalObjective::Fdr { .. } => return Err(invalid("oracle Bayes risk needs a bayes objective")),
    };
    let map = threshold_map(population, objective, model)?;
    Ok(population
        .nodes()
        .iter()
        .zip(&map)
        .map(|(&(q, w), &(_, tau))| w * bayes_risk(q, tau, omega0, omega1, model))
        .sum())
}

/// ∫ TDR(q, τ_q) dT(q).
pub fn oracle_tdr(population: &TypePopulation, objective: &PrincipalObjective, model: &TestModel) -> Result<f64> {
    if !matches!(objective, PrincipalObjective::Fdr { .. }) {
        return Err(invalid("oracle TDR needs an fdr objective"));
    }
    let map = threshold_map(population, objective, model)?;
    Ok(population
        .nodes()
        .iter()
        .zip(&map)
        .map(|(&(q, w), &(_, tau))| w * tdr(q, tau, model))
        .sum())
}

fn check_type(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("type {q} outside [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::normal_cdf;

    fn gm(theta: f64) -> TestModel {
        TestModel::gaussian_mean(theta).unwrap()
    }

    #[test]
    fn bayes_threshold_cases() {
        let m = gm(1.0);
        let t = bayes_threshold(0.5, 1.0, 1.0, &m).unwrap();
        assert!((t - (1.0 - normal_cdf(0.5))).abs() < 1e-14);
        assert!((t - 0.3085).abs() < 1e-4);
        assert_eq!(bayes_threshold(0.0, 1.0, 1.0, &m).unwrap(), 1.0);
        assert!(bayes_threshold(1e-12, 1.0, 1.0, &m).unwrap() > 0.999_999);
        assert_eq!(bayes_threshold(1.0, 1.0, 1.0, &m).unwrap(), 0.0);
        assert_eq!(bayes_threshold(0.4, 1.0, 0.0, &m).unwrap(), 0.0);
        let tab = TestModel::tabulated(&[(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)]).unwrap();
        assert!(bayes_threshold(0.5, 1.0, 1.0, &tab).is_err());
    }

    /// Brute-force Bayes threshold: minimize the risk over a fine τ grid.
    #[test]
    fn bayes_threshold_minimizes_risk() {
        let m = gm(1.0);
        for q in [0.2, 0.5, 0.7] {
            let t = bayes_threshold(q, 2.0, 1.0, &m).unwrap();
            let best = (1..100_000)
                .map(|i| i as f64 / 100_000.0)
                .min_by(|a, b| bayes_risk(q, *a, 2.0, 1.0, &m).total_cmp(&bayes_risk(q, *b, 2.0, 1.0, &m)))
                .unwrap();
            assert!((t - best).abs() < 2e-5, "q={q} t={t} best={best}");
        }
    }

    #[test]
    fn fdr_threshold_reference_values() {
        let m = gm(1.0);
        assert!((fdr_threshold(0.8, 0.25, &m) - 0.004).abs() < 5e-4);
        assert!((fdr_threshold(0.3, 0.25, &m) - 0.74).abs() < 5e-3);
        assert_eq!(fdr_threshold(0.0, 0.25, &m), 1.0);
        assert_eq!(fdr_threshold(0.2, 0.25, &m), 1.0);
        assert_eq!(fdr_threshold(1.0, 0.25, &m), 0.0);
    }

    #[test]
    fn fdr_threshold_hits_budget() {
        for theta in [0.5, 1.0, 2.0] {
            let m = gm(theta);
            for i in 1..40 {
                let q = 0.26 + i as f64 * 0.018;
                let t = fdr_threshold(q, 0.25, &m);
                if t > FDR_BRACKET_FLOOR && t < 1.0 {
                    assert!((fdr(q, t, &m) - 0.25).abs() < 1e-8, "theta={theta} q={q}");
                }
            }
        }
    }

    #[test]
    fn threshold_map_five_types() {
        let m = gm(1.0);
        let pop = TypePopulation::equally_weighted(vec![0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
        let map = threshold_map(&pop, &PrincipalObjective::fdr(0.25).unwrap(), &m).unwrap();
        let expected = [0.74, 0.38, 0.18, 0.07, 0.02];
        for ((_, t), e) in map.iter().zip(expected) {
            assert!((t - e).abs() <= 5e-3, "{t} vs {e}");
        }
        for w in map.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        let single = threshold_map(
            &TypePopulation::point_mass(0.5).unwrap(),
            &PrincipalObjective::fdr(0.25).unwrap(),
            &m,
        )
        .unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn type_for_threshold_inverts_closed_form() {
        // FDR(q, τ) = α solved for q.
        let m = gm(1.0);
        let obj = PrincipalObjective::fdr(0.25).unwrap();
        for tau in [0.001, 0.05, 0.31] {
            let b = m.power(tau);
            let closed = 0.25 * b / (tau * 0.75 + 0.25 * b);
            let q = type_for_threshold(tau, &obj, &m).unwrap();
            assert!((q - closed).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_values() {
        let m = gm(1.0);
        let bayes = PrincipalObjective::bayes(1.0, 1.0).unwrap();
        let pm = TypePopulation::point_mass(0.4).unwrap();
        let t = bayes_threshold(0.4, 1.0, 1.0, &m).unwrap();
        let v = oracle_bayes_risk(&pm, &bayes, &m).unwrap();
        assert!((v - bayes_risk(0.4, t, 1.0, 1.0, &m)).abs() < 1e-15);
        let zero = PrincipalObjective::bayes(1.0, 0.0).unwrap();
        let grid = TypePopulation::uniform_grid(0.3, 0.7, 64).unwrap();
        assert_eq!(oracle_bayes_risk(&grid, &zero, &m).unwrap(), 0.0);

        let fdr_obj = PrincipalObjective::fdr(0.25).unwrap();
        assert_eq!(
            oracle_tdr(&TypePopulation::point_mass(1.0).unwrap(), &fdr_obj, &m).unwrap(),
            0.0
        );
        let t5 = fdr_threshold(0.5, 0.25, &m);
        let v5 = oracle_tdr(&TypePopulation::point_mass(0.5).unwrap(), &fdr_obj, &m).unwrap();
        assert!((v5 - 0.5 * m.power(t5)).abs() < 1e-15);
    }

    #[test]
    fn oracle_bayes_risk_matches_dense_quadrature() {
        // Dense Simpson on an independently minimized integrand.
        let m = gm(1.0);
        let obj = PrincipalObjective::bayes(1.0, 1.0).unwrap();
        let value = oracle_bayes_risk(&TypePopulation::uniform_grid(0.3, 0.7, 1024).unwrap(), &obj, &m).unwrap();
        let integrand = |q: f64| {
            // Golden-section search on the convex-in-LR-region risk.
            let f = |t: f64| bayes_risk(q, t, 1.0, 1.0, &m);
            let (mut a, mut b) = (1e-9, 1.0 - 1e-9);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..200 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if f(c) < f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            f(0.5 * (a + b))
        };
        let n = 2000;
        let h = 0.4 / n as f64;
        let mut s = integrand(0.3) + integrand(0.7);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * integrand(0.3 + i as f64 * h);
        }
        let dense = s * h / 3.0 / 0.4;
        assert!((value - dense).abs() < 1e-4, "{value} vs {dense}");
    }

    #[test]
    fn two_type_oracle_tdr() {
        let m = gm(1.0);
        let obj = PrincipalObjective::fdr(0.25).unwrap();
        let pop = TypePopulation::equally_weighted(vec![0.3, 0.7]).unwrap();
        let v = oracle_tdr(&pop, &obj, &m).unwrap();
        let direct = 0.5 * (0.7 * m.power(fdr_threshold(0.3, 0.25, &m)) + 0.3 * m.power(fdr_threshold(0.7, 0.25, &m)));
        assert!((v - direct).abs() < 1e-15);
        // Same value with the rounded thresholds, to rounding accuracy.
        let rounded = 0.5 * (0.7 * m.power(0.74) + 0.3 * m.power(0.02));
        assert!((v - rounded).abs() < 5e-3);
    }

    #[test]
    fn population_validation() {
        assert!(TypePopulation::discrete(vec![0.5, 0.4], vec![0.5, 0.5]).is_err());
        assert!(TypePopulation::discrete(vec![0.4, 0.5], vec![0.5, 0.6]).is_err());
        assert!(TypePopulation::uniform_grid(0.5, 0.5, 10).is_err());
        assert!(TypePopulation::uniform_grid(0.1, 0.5, 1).is_err());
        assert!(PrincipalObjective::fdr(1.5).is_err());
        assert!(PrincipalObjective::bayes(0.0, 0.0).is_err());
    }
}
