use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use screening_core::builders::{
    build_finite_menu, build_fixed_reward, build_from_potential, build_varying_reward, EpsilonSchedule, GPotential,
};
use screening_core::contracts::{verify_menu, Contract, Menu, SeparationReport};
use screening_core::evaluation::{
    frontier, information_rent, principal_return, screening_cost, simulate_population, SimulationOptions, TwoTypes,
};
use screening_core::objectives::{thresholds_for, type_threshold};
use screening_core::quadrature::linspace;
use screening_core::sensitivity::{default_p_grid, sensitivity_sweep, MisspecScenario};
use screening_core::{PrincipalObjective, TestModel, TypePopulation};

use crate::config::{MenuSpec, RunConfig, Schedule};
use crate::output::{num, opt_num, Output};

/// A built menu failed the separation check.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "menu verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn require<'a, T>(section: &'a Option<T>, name: &str, command: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| anyhow::Error::new(crate::config::missing_section(name, command)))
}

pub fn thresholds(cfg: &RunConfig, out: &Output) -> Result<String> {
    let pop = require(&cfg.population, "population", "thresholds")?;
    let map = thresholds_for(&pop.types(), &cfg.objective, &cfg.test)?;
    let rows: Vec<Vec<String>> = map
        .iter()
        .map(|&(q, t)| vec![num(q), num(t), num(cfg.test.power(t))])
        .collect();
    out.csv("thresholds.csv", &header(&["q", "tau", "power"]), &rows)?;
    Ok(format!(
        "thresholds: {} types -> {}",
        map.len(),
        out.dir().join("thresholds.csv").display()
    ))
}

#[derive(Debug, Serialize)]
struct BuildDetails<'a> {
    method: &'static str,
    contracts: usize,
    worst_type: f64,
    /// Cost intervals of the finite recursion.
    #[serde(skip_serializing_if = "Option::is_none")]
    intervals: Option<&'a [(f64, f64)]>,
    warnings: &'a [String],
    verification: &'a SeparationReport,
}

pub struct Built {
    pub menu: Menu,
    pub intervals: Option<Vec<(f64, f64)>>,
    pub warnings: Vec<String>,
}

/// Zero-utility contract for type `q` at its own threshold.
fn anchor(q: f64, tau: Option<f64>, reward: f64, cost: Option<f64>, cfg: &RunConfig) -> Result<Contract> {
    let tau = match tau {
        Some(t) => t,
        None => type_threshold(q, &cfg.objective, &cfg.test)?,
    };
    match cost {
        Some(c) => Ok(Contract::new(tau, reward, c)?),
        None => {
            let c = reward * (q * tau + (1.0 - q) * cfg.test.power(tau));
            Ok(Contract::new(tau, reward, c)?.with_nonnegative_utility(q, &cfg.test))
        }
    }
}

fn default_lower_type(objective: &PrincipalObjective, qbar: f64, points: usize) -> f64 {
    let floor = match objective {
        PrincipalObjective::Fdr { alpha } => *alpha,
        PrincipalObjective::Bayes { .. } => 0.0,
    };
    floor + (qbar - floor) / points as f64
}

/// Varying-reward menu with the given schedule in place of the configured one.
fn varying_with(cfg: &RunConfig, schedule: &Schedule) -> Result<Menu> {
    let Some(MenuSpec::VaryingReward {
        worst_type,
        reward,
        base_tau,
        base_cost,
        lower_type,
        points,
        ..
    }) = &cfg.menu
    else {
        bail!("menu method is not varying_reward");
    };
    let base = anchor(*worst_type, *base_tau, *reward, *base_cost, cfg)?;
    let lo = lower_type.unwrap_or_else(|| default_lower_type(&cfg.objective, *worst_type, *points));
    let support = linspace(lo, *worst_type, *points);
    let map = thresholds_for(&support, &cfg.objective, &cfg.test)?;
    let eps: EpsilonSchedule = schedule.build(*worst_type)?;
    Ok(build_varying_reward(&base, &eps, &map, &cfg.test)?)
}

pub fn build_menu(cfg: &RunConfig) -> Result<Built> {
    let spec = require(&cfg.menu, "menu", "menu-build")?;
    let plain = |menu| Built {
        menu,
        intervals: None,
        warnings: Vec::new(),
    };
    match spec {
        MenuSpec::Finite {
            terminal_reward,
            terminal_cost,
            epsilon,
            lambda,
        } => {
            let pop = require(&cfg.population, "population", "menu-build")?;
            let TypePopulation::Discrete { types, .. } = pop else {
                bail!(crate::config::ConfigErrors(vec![crate::config::Issue {
                    pointer: "/population/kind".into(),
                    message: "the finite method needs a discrete population".into(),
                }]));
            };
            let taus: Vec<f64> = thresholds_for(types, &cfg.objective, &cfg.test)?
                .into_iter()
                .map(|(_, t)| t)
                .collect();
            let eps = if epsilon.len() == 1 {
                vec![epsilon[0]; types.len().saturating_sub(1)]
            } else {
                epsilon.clone()
            };
            let b = build_finite_menu(
                types,
                &taus,
                (*terminal_reward, *terminal_cost),
                &eps,
                *lambda,
                &cfg.test,
            )?;
            Ok(Built {
                menu: b.menu,
                intervals: Some(b.intervals),
                warnings: b.warnings,
            })
        }
        MenuSpec::FixedReward { reward, lo, hi, points } => Ok(plain(build_fixed_reward(
            *reward,
            &linspace(*lo, *hi, *points),
            &cfg.objective,
            &cfg.test,
        )?)),
        MenuSpec::VaryingReward { schedule, .. } => Ok(plain(varying_with(cfg, schedule)?)),
        MenuSpec::FromPotential {
            support,
            values,
            subgradients,
        } => {
            let g = GPotential::tabulated(support.clone(), values.clone(), subgradients.clone())?;
            let map = thresholds_for(support, &cfg.objective, &cfg.test)?;
            Ok(plain(build_from_potential(&g, &map, &cfg.test)?))
        }
    }
}

pub fn menu_build(cfg: &RunConfig, out: &Output) -> Result<String> {
    let built = build_menu(cfg)?;
    let report = verify_menu(&built.menu, &cfg.test);
    let mut json = built.menu.to_json()?;
    json.push('\n');
    out.text("menu.json", &json)?;
    let (worst, _) = built.menu.worst_type_entry();
    out.json(
        "build.json",
        &BuildDetails {
            method: cfg.menu.as_ref().map_or("", MenuSpec::method),
            contracts: built.menu.len(),
            worst_type: worst,
            intervals: built.intervals.as_deref(),
            warnings: &built.warnings,
            verification: &report,
        },
    )?;
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    let taus: Vec<String> = built
        .menu
        .contracts()
        .iter()
        .take(8)
        .map(|c| format!("{:.4}", c.tau))
        .collect();
    Ok(format!(
        "menu-build: {} contracts, separating={}, thresholds [{}{}]",
        built.menu.len(),
        report.passed,
        taus.join(", "),
        if built.menu.len() > 8 { ", ..." } else { "" }
    ))
}

pub fn load_menu(path: &Path) -> Result<Menu> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Menu::from_json(&text).with_context(|| format!("parsing menu {}", path.display()))
}

/// The menu from `path` if given, else the one the config describes.
fn menu_for(cfg: &RunConfig, path: Option<&Path>) -> Result<Menu> {
    match path {
        Some(p) => load_menu(p),
        None => Ok(build_menu(cfg)?.menu),
    }
}

pub fn menu_verify(cfg: &RunConfig, out: &Output, menu_path: &Path) -> Result<String> {
    let menu = load_menu(menu_path)?;
    let report = verify_menu(&menu, &cfg.test);
    out.json("verify.json", &report)?;
    if !report.passed {
        let why = match &report.first_violation {
            Some(v) => serde_json::to_string(v)?,
            None => "no violation recorded".into(),
        };
        return Err(VerificationFailed(why).into());
    }
    Ok(format!(
        "menu-verify: pass ({} pairs, min IC gap {:.3e}, near ties {})",
        report.pairs_checked, report.min_ic_gap, report.near_ties
    ))
}

pub fn frontier_cmd(cfg: &RunConfig, out: &Output) -> Result<String> {
    let (two, resolution) = match (&cfg.frontier, &cfg.population) {
        (Some((two, r)), _) => (*two, *r),
        (None, Some(pop)) => (TwoTypes::from_population(pop)?, 200),
        (None, None) => bail!(crate::config::missing_section("frontier", "frontier")),
    };
    let points = frontier(&two, &cfg.test, resolution);
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.label.as_str().to_string(), num(p.parameter), num(p.fdr), num(p.tdr)])
        .collect();
    out.csv("frontier.csv", &header(&["label", "parameter", "fdr", "tdr"]), &rows)?;
    Ok(format!(
        "frontier: {} points -> {}",
        rows.len(),
        out.dir().join("frontier.csv").display()
    ))
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    method: &'static str,
    contracts: usize,
    screening_cost: f64,
    information_rent: f64,
    base_contract: Contract,
    worst_type: f64,
}

pub fn evaluate(cfg: &RunConfig, out: &Output, menu_path: Option<&Path>) -> Result<String> {
    let pop = require(&cfg.population, "population", "evaluate")?;
    let menu = menu_for(cfg, menu_path)?;
    let (worst, base) = menu.worst_type_entry();
    let report = EvaluateReport {
        method: cfg.menu.as_ref().map_or("file", MenuSpec::method),
        contracts: menu.len(),
        screening_cost: screening_cost(&menu, &base, pop, &cfg.test),
        information_rent: information_rent(&menu, pop, &cfg.test),
        base_contract: base,
        worst_type: worst,
    };
    out.json("evaluate.json", &report)?;

    // One return column per η for varying-reward menus, else one for the menu itself.
    let varying = menu_path.is_none() && matches!(cfg.menu, Some(MenuSpec::VaryingReward { .. }));
    let mut columns: Vec<(String, Menu)> = Vec::new();
    if varying && !cfg.return_etas.is_empty() {
        for &eta in &cfg.return_etas {
            columns.push((
                format!("return_eta_{eta}"),
                varying_with(cfg, &Schedule::Quadratic { eta })?,
            ));
        }
    } else if let (
        true,
        Some(MenuSpec::VaryingReward {
            schedule: Schedule::Quadratic { eta },
            ..
        }),
    ) = (varying, &cfg.menu)
    {
        columns.push((format!("return_eta_{eta}"), menu));
    } else {
        columns.push(("return".into(), menu));
    }
    let qs = linspace(0.0, 1.0, cfg.return_points);
    let mut head = vec!["q".to_string()];
    head.extend(columns.iter().map(|(name, _)| name.clone()));
    let rows: Vec<Vec<String>> = qs
        .iter()
        .map(|&q| {
            let mut row = vec![num(q)];
            for (_, m) in &columns {
                let (_, b) = m.worst_type_entry();
                row.push(num(principal_return(m, &b, q, &cfg.test).two_bracket));
            }
            row
        })
        .collect();
    out.csv("returns.csv", &head, &rows)?;
    Ok(format!(
        "evaluate: screening cost {:.6}, information rent {:.6}",
        report.screening_cost, report.information_rent
    ))
}

pub fn simulate(cfg: &RunConfig, out: &Output, menu_path: Option<&Path>) -> Result<String> {
    let pop = require(&cfg.population, "population", "simulate")?;
    let menu = menu_for(cfg, menu_path)?;
    let sim = &cfg.simulation;
    let report = simulate_population(
        &menu,
        pop,
        &cfg.test,
        sim.n,
        sim.seed,
        SimulationOptions {
            stratified: sim.stratified,
        },
    )?;
    out.json("simulate.json", &report)?;
    Ok(format!(
        "simulate: {} agents, FDR {:.4} (se {:.4}), TDR {:.4} (se {:.4})",
        report.n_agents,
        report.empirical_fdr.value,
        report.empirical_fdr.std_error,
        report.empirical_tdr.value,
        report.empirical_tdr.std_error
    ))
}

pub fn sensitivity(cfg: &RunConfig, out: &Output, menu_path: Option<&Path>) -> Result<String> {
    let spec = require(&cfg.sensitivity, "sensitivity", "sensitivity")?;
    let menu = menu_for(cfg, menu_path)?;
    let mut rows = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for &theta in &spec.actual_theta1 {
        let actual = TestModel::gaussian_mean(theta)?;
        let scenario = MisspecScenario::new(cfg.test.clone(), actual, cfg.objective, menu.clone())?;
        for r in sensitivity_sweep(&scenario, &default_p_grid(&scenario, spec.points))? {
            if let Some(g) = r.gap {
                worst = worst.max(g);
            }
            rows.push(vec![num(theta), num(r.p), opt_num(r.gap)]);
        }
    }
    out.csv("sensitivity.csv", &header(&["theta_actual", "p", "gap"]), &rows)?;
    Ok(format!("sensitivity: {} rows, largest gap {worst:.5}", rows.len()))
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}
