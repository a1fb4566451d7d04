//! Statistical and financial evaluation of thresholds and menus.

mod financial;
mod frontier;
mod metrics;
mod simulate;

pub use financial::{information_rent, principal_return, screening_cost, truthful_utility, PrincipalReturn};
pub use frontier::{
    alpha_sweep, curve, dominance_shortfall, frontier, interpolate_monotone, tau_sweep, uniform_tdr_at_fdr, CurveLabel,
    FrontierPoint, TwoTypes,
};
pub use metrics::{approval_probability, bayes_risk, fdr, tdr};
pub use simulate::{simulate_population, ContractCounts, Estimate, SimulationOptions, SimulationReport, CHUNK_SIZE};
