use crate::test_model::TestModel;

/// False discovery rate qτ / (qτ + (1 − q)β₁(τ)); 0 when nothing is approved.
pub fn fdr(q: f64, tau: f64, model: &TestModel) -> f64 {
    let null = q * model.type_one_error(tau);
    let total = null + (1.0 - q) * model.power(tau);
    if total <= 0.0 {
        0.0
    } else {
        null / total
    }
}

/// True discovery rate (1 − q)β₁(τ).
pub fn tdr(q: f64, tau: f64, model: &TestModel) -> f64 {
    (1.0 - q) * model.power(tau)
}

/// ω₀qτ + ω₁(1 − q)(1 − β₁(τ)).
pub fn bayes_risk(q: f64, tau: f64, omega0: f64, omega1: f64, model: &TestModel) -> f64 {
    omega0 * q * model.type_one_error(tau) + omega1 * (1.0 - q) * (1.0 - model.power(tau))
}

/// Probability an agent of type q is approved at threshold τ.
pub fn approval_probability(q: f64, tau: f64, model: &TestModel) -> f64 {
    q * model.type_one_error(tau) + (1.0 - q) * model.power(tau)
}
