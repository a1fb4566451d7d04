use serde::Serialize;

use crate::contracts::{select, Contract, Menu};
use crate::evaluation::approval_probability;
use crate::objectives::TypePopulation;
use crate::test_model::TestModel;

/// Utility of type q under its best response to the menu (0 if it opts out).
pub fn truthful_utility(q: f64, menu: &Menu, model: &TestModel) -> f64 {
    select(q, menu, model).utility()
}

/// ∫[G(q) − Ψ(q; base)] dT(q).
pub fn screening_cost(menu: &Menu, base: &Contract, population: &TypePopulation, model: &TestModel) -> f64 {
    population.integrate(|q| truthful_utility(q, menu, model) - base.utility(q, model))
}

/// ∫G(q) dT(q).
pub fn information_rent(menu: &Menu, population: &TypePopulation, model: &TestModel) -> f64 {
    population.integrate(|q| truthful_utility(q, menu, model))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrincipalReturn {
    pub q: f64,
    /// [c_q − R_q·P(approve)] − [c̄ − R̄·P̄(approve)].
    pub two_bracket: f64,
    /// −[G(q) − Ψ(q; base)].
    pub simplified: f64,
}

/// Principal's expected return from type q under the menu, relative to
/// offering only the base contract.
pub fn principal_return(menu: &Menu, base: &Contract, q: f64, model: &TestModel) -> PrincipalReturn {
    let outcome = select(q, menu, model);
    let tailored = match outcome.index() {
        Some(i) => {
            let c = &menu.contracts()[i];
            c.cost - c.reward * approval_probability(q, c.tau, model)
        }
        None => 0.0,
    };
    let baseline = base.cost - base.reward * approval_probability(q, base.tau, model);
    PrincipalReturn {
        q,
        two_bracket: tailored - baseline,
        simplified: -(outcome.utility() - base.utility(q, model)),
    }
}
