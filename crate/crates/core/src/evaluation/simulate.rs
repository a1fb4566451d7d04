use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::contracts::{select, Menu};
use crate::error::{invalid, Result};
use crate::objectives::TypePopulation;
use crate::test_model::TestModel;

/// Agents per random stream. Chunk k draws from the root seed's stream k,
/// so results do not depend on the number of worker threads.
pub const CHUNK_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimulationOptions {
    /// Allocate agents to types in proportion to their weights (discrete
    /// populations) or one per equal-width stratum (uniform grids) instead of
    /// drawing types i.i.d.
    pub stratified: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ContractCounts {
    pub report: f64,
    pub chosen: u64,
    pub nulls: u64,
    pub approved: u64,
    pub null_approved: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Binomial proportion with its normal-approximation standard error.
    fn proportion(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                value: 0.0,
                std_error: 0.0,
            };
        }
        let p = successes as f64 / trials as f64;
        Self {
            value: p,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub n_agents: u64,
    pub seed: u64,
    pub stratified: bool,
    pub opted_out: u64,
    /// Rows for each menu entry, in support order.
    pub per_contract: Vec<ContractCounts>,
    /// Null approvals over all approvals.
    pub empirical_fdr: Estimate,
    /// Non-null approvals per agent.
    pub empirical_tdr: Estimate,
    /// Costs collected minus rewards paid.
    pub principal_cash: f64,
}

#[derive(Clone, Default)]
struct Tally {
    opted_out: u64,
    rows: Vec<ContractCounts>,
    cash: f64,
}

impl Tally {
    fn new(menu: &Menu) -> Self {
        let rows = menu
            .support()
            .iter()
            .map(|&p| ContractCounts {
                report: p,
                ..Default::default()
            })
            .collect();
        Self {
            opted_out: 0,
            rows,
            cash: 0.0,
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.opted_out += other.opted_out;
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            a.chosen += b.chosen;
            a.nulls += b.nulls;
            a.approved += b.approved;
            a.null_approved += b.null_approved;
        }
        self.cash += other.cash;
    }
}

enum TypeDraw<'a> {
    Discrete { types: &'a [f64], cumulative: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
}

impl TypeDraw<'_> {
    fn iid<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Discrete { types, cumulative } => {
                let u: f64 = rng.gen();
                let k = cumulative.partition_point(|&c| c <= u).min(types.len() - 1);
                types[k]
            }
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
        }
    }
}

/// Largest-remainder allocation of n agents to weights.
fn allocate(weights: &[f64], n: u64) -> Vec<u64> {
    let exact: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let mut left = n - counts.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Monte Carlo run of `n` agents facing the menu.
pub fn simulate_population(
    menu: &Menu,
    population: &TypePopulation,
    model: &TestModel,
    n: u64,
    seed: u64,
    options: SimulationOptions,
) -> Result<SimulationReport> {
    if n == 0 {
        return Err(invalid("simulation needs at least one agent"));
    }
    let draw = match population {
        TypePopulation::Discrete { types, weights } => {
            let mut acc = 0.0;
            let cumulative = weights
                .iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect();
            TypeDraw::Discrete { types, cumulative }
        }
        TypePopulation::UniformGrid { lo, hi, .. } => TypeDraw::Uniform { lo: *lo, hi: *hi },
    };
    // Stratified discrete runs assign agent index ranges to types up front.
    let strata: Option<Vec<(u64, f64)>> = match (&draw, options.stratified) {
        (TypeDraw::Discrete { types, .. }, true) => {
            let TypePopulation::Discrete { weights, .. } = population else {
                unreachable!()
            };
            let mut end = 0;
            Some(
                allocate(weights, n)
                    .into_iter()
                    .zip(types.iter())
                    .map(|(c, &q)| {
                        end += c;
                        (end, q)
                    })
                    .collect(),
            )
        }
        _ => None,
    };

    let chunks = n.div_ceil(CHUNK_SIZE as u64);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let mut tally = Tally::new(menu);
            let start = k * CHUNK_SIZE as u64;
            let end = (start + CHUNK_SIZE as u64).min(n);
            for agent in start..end {
                let q = match (&strata, &draw, options.stratified) {
                    (Some(s), _, _) => s[s.partition_point(|&(e, _)| e <= agent)].1,
                    (None, TypeDraw::Uniform { lo, hi }, true) => {
                        lo + (hi - lo) * (agent as f64 + rng.gen::<f64>()) / n as f64
                    }
                    _ => draw.iid(&mut rng),
                };
                let Some(i) = select(q, menu, model).index() else {
                    tally.opted_out += 1;
                    continue;
                };
                let contract = &menu.contracts()[i];
                let is_null = rng.gen::<f64>() < q;
                let approved = model.sample_pvalue(is_null, &mut rng) <= contract.tau;
                let row = &mut tally.rows[i];
                row.chosen += 1;
                row.nulls += is_null as u64;
                row.approved += approved as u64;
                row.null_approved += (approved && is_null) as u64;
                tally.cash += contract.cost - if approved { contract.reward } else { 0.0 };
            }
            tally
        })
        .collect();

    let mut total = Tally::new(menu);
    for t in &tallies {
        total.merge(t);
    }
    let approved: u64 = total.rows.iter().map(|r| r.approved).sum();
    let null_approved: u64 = total.rows.iter().map(|r| r.null_approved).sum();
    Ok(SimulationReport {
        n_agents: n,
        seed,
        stratified: options.stratified,
        opted_out: total.opted_out,
        per_contract: total.rows,
        empirical_fdr: Estimate::proportion(null_approved, approved),
        empirical_tdr: Estimate::proportion(approved - null_approved, n),
        principal_cash: total.cash,
    })
}
