//! Run configuration: JSON in, validated domain objects out. Every problem
//! is reported with the JSON pointer of the offending value.

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use screening_core::builders::EpsilonSchedule;
use screening_core::evaluation::TwoTypes;
use screening_core::test_model::PowerTable;
use screening_core::{PrincipalObjective, TestModel, TypePopulation};

pub const SCHEMA_VERSION: u64 = 1;
pub const MENU_METHODS: [&str; 4] = ["finite", "fixed_reward", "varying_reward", "from_potential"];
const DEFAULT_POINTS: usize = 512;
const DEFAULT_FRONTIER_RESOLUTION: usize = 200;
const DEFAULT_RETURN_POINTS: usize = 161;

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

#[derive(Debug)]
pub struct ConfigErrors(pub Vec<Issue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "config error at {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Error for a subcommand run without a section it depends on.
pub fn missing_section(name: &str, command: &str) -> ConfigErrors {
    ConfigErrors(vec![Issue {
        pointer: format!("/{name}"),
        message: format!("section is required by `{command}`"),
    }])
}

#[derive(Debug, Clone)]
pub enum Schedule {
    Quadratic { eta: f64 },
    Tabulated { z: Vec<f64>, eps: Vec<f64> },
}

impl Schedule {
    pub fn build(&self, qbar: f64) -> screening_core::Result<EpsilonSchedule> {
        match self {
            Self::Quadratic { eta } => EpsilonSchedule::quadratic(*eta, qbar),
            Self::Tabulated { z, eps } => EpsilonSchedule::tabulated(z.clone(), eps.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MenuSpec {
    Finite {
        terminal_reward: f64,
        terminal_cost: f64,
        epsilon: Vec<f64>,
        lambda: f64,
    },
    FixedReward {
        reward: f64,
        lo: f64,
        hi: f64,
        points: usize,
    },
    VaryingReward {
        worst_type: f64,
        reward: f64,
        base_tau: Option<f64>,
        base_cost: Option<f64>,
        schedule: Schedule,
        lower_type: Option<f64>,
        points: usize,
    },
    FromPotential {
        support: Vec<f64>,
        values: Vec<f64>,
        subgradients: Vec<f64>,
    },
}

impl MenuSpec {
    pub fn method(&self) -> &'static str {
        match self {
            Self::Finite { .. } => "finite",
            Self::FixedReward { .. } => "fixed_reward",
            Self::VaryingReward { .. } => "varying_reward",
            Self::FromPotential { .. } => "from_potential",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub n: u64,
    pub seed: u64,
    pub stratified: bool,
}

#[derive(Debug, Clone)]
pub struct SensitivitySpec {
    pub actual_theta1: Vec<f64>,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub test: TestModel,
    pub objective: PrincipalObjective,
    pub population: Option<TypePopulation>,
    pub menu: Option<MenuSpec>,
    pub simulation: SimulationSpec,
    pub frontier: Option<(TwoTypes, usize)>,
    pub sensitivity: Option<SensitivitySpec>,
    /// η values for return curves; defaults to the menu's own schedule.
    pub return_etas: Vec<f64>,
    pub return_points: usize,
    pub output_dir: Option<PathBuf>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
}

struct Parser<'a> {
    issues: Vec<Issue>,
    base_dir: &'a Path,
}

fn join(path: &str, key: &str) -> String {
    format!("{path}/{key}")
}

impl Parser<'_> {
    fn issue(&mut self, pointer: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            pointer: pointer.into(),
            message: message.into(),
        });
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        let obj = v.as_object();
        if obj.is_none() {
            self.issue(path, "expected an object");
        }
        obj
    }

    fn known_keys(&mut self, obj: &Map<String, Value>, path: &str, allowed: &[&str]) {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.issue(
                    join(path, key),
                    format!("unknown key; expected one of {}", allowed.join(", ")),
                );
            }
        }
    }

    fn number(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        match obj.get(key) {
            None => {
                self.issue(join(path, key), "required number is missing");
                None
            }
            Some(v) => self.as_number(v, &join(path, key)),
        }
    }

    fn as_number(&mut self, v: &Value, path: &str) -> Option<f64> {
        let x = v.as_f64().filter(|x| x.is_finite());
        if x.is_none() {
            self.issue(path, "expected a finite number");
        }
        x
    }

    fn opt_number(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        obj.get(key).and_then(|v| self.as_number(v, &join(path, key)))
    }

    fn opt_count(&mut self, obj: &Map<String, Value>, key: &str, path: &str, min: u64) -> Option<u64> {
        let v = obj.get(key)?;
        match v.as_u64() {
            Some(n) if n >= min => Some(n),
            _ => {
                self.issue(join(path, key), format!("expected an integer >= {min}"));
                None
            }
        }
    }

    fn numbers(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<Vec<f64>> {
        let p = join(path, key);
        let Some(v) = obj.get(key) else {
            self.issue(p, "required array is missing");
            return None;
        };
        self.as_numbers(v, &p)
    }

    fn as_numbers(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let Some(arr) = v.as_array() else {
            self.issue(path, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            out.push(self.as_number(x, &format!("{path}/{i}"))?);
        }
        Some(out)
    }

    fn kind<'v>(&mut self, obj: &'v Map<String, Value>, key: &str, path: &str, allowed: &[&str]) -> Option<&'v str> {
        let p = join(path, key);
        match obj.get(key).and_then(Value::as_str) {
            Some(k) if allowed.contains(&k) => Some(k),
            Some(k) => {
                self.issue(p, format!("unknown {key} `{k}`; allowed: {}", allowed.join(", ")));
                None
            }
            None => {
                self.issue(p, format!("required string; allowed: {}", allowed.join(", ")));
                None
            }
        }
    }

    /// Runs a core constructor, recording its error at `path`.
    fn check<T>(&mut self, r: screening_core::Result<T>, path: &str) -> Option<T> {
        r.map_err(|e| self.issue(path, e.to_string())).ok()
    }

    fn test(&mut self, v: &Value) -> Option<TestModel> {
        let path = "/test";
        let obj = self.object(v, path)?;
        match self.kind(obj, "kind", path, &["gaussian_mean", "tabulated"])? {
            "gaussian_mean" => {
                self.known_keys(obj, path, &["kind", "theta1"]);
                let theta = self.number(obj, "theta1", path)?;
                self.check(TestModel::gaussian_mean(theta), &join(path, "theta1"))
            }
            _ => {
                self.known_keys(obj, path, &["kind", "path", "table"]);
                if let Some(rel) = obj.get("path") {
                    let p = join(path, "path");
                    let Some(rel) = rel.as_str() else {
                        self.issue(p, "expected a file path");
                        return None;
                    };
                    let file = self.base_dir.join(rel);
                    let table = File::open(&file)
                        .map_err(screening_core::Error::from)
                        .and_then(PowerTable::from_csv);
                    return self.check(table, &p).map(TestModel::Tabulated);
                }
                let p = join(path, "table");
                let Some(rows) = obj.get("table").and_then(Value::as_array) else {
                    self.issue(p, "tabulated test needs `path` or a `table` of [tau, beta1] pairs");
                    return None;
                };
                let mut points = Vec::new();
                for (i, row) in rows.iter().enumerate() {
                    let pair = self.as_numbers(row, &format!("{p}/{i}"))?;
                    if pair.len() != 2 {
                        self.issue(format!("{p}/{i}"), "expected a [tau, beta1] pair");
                        return None;
                    }
                    points.push((pair[0], pair[1]));
                }
                self.check(TestModel::tabulated(&points), &p)
            }
        }
    }

    fn objective(&mut self, v: &Value) -> Option<PrincipalObjective> {
        let path = "/objective";
        let obj = self.object(v, path)?;
        match self.kind(obj, "kind", path, &["fdr", "bayes"])? {
            "fdr" => {
                self.known_keys(obj, path, &["kind", "alpha"]);
                let alpha = self.number(obj, "alpha", path)?;
                self.check(PrincipalObjective::fdr(alpha), &join(path, "alpha"))
            }
            _ => {
                self.known_keys(obj, path, &["kind", "omega0", "omega1"]);
                let w0 = self.number(obj, "omega0", path);
                let w1 = self.number(obj, "omega1", path);
                self.check(PrincipalObjective::bayes(w0?, w1?), path)
            }
        }
    }

    fn population(&mut self, v: &Value) -> Option<TypePopulation> {
        let path = "/population";
        let obj = self.object(v, path)?;
        match self.kind(obj, "kind", path, &["discrete", "uniform_grid"])? {
            "discrete" => {
                self.known_keys(obj, path, &["kind", "types", "weights"]);
                let types = self.numbers(obj, "types", path)?;
                let weights = match obj.get("weights") {
                    Some(w) => self.as_numbers(w, &join(path, "weights"))?,
                    None => vec![1.0 / types.len().max(1) as f64; types.len()],
                };
                self.check(TypePopulation::discrete(types, weights), path)
            }
            _ => {
                self.known_keys(obj, path, &["kind", "lo", "hi", "n"]);
                let lo = self.number(obj, "lo", path);
                let hi = self.number(obj, "hi", path);
                let n = self.opt_count(obj, "n", path, 2).unwrap_or(1024) as usize;
                self.check(TypePopulation::uniform_grid(lo?, hi?, n), path)
            }
        }
    }

    fn menu(&mut self, v: &Value, grid: Option<usize>) -> Option<MenuSpec> {
        let path = "/menu";
        let obj = self.object(v, path)?;
        let method = self.kind(obj, "method", path, &MENU_METHODS)?;
        match method {
            "finite" => {
                self.known_keys(obj, path, &["method", "terminal", "epsilon", "lambda"]);
                let tp = join(path, "terminal");
                let terminal = match obj.get("terminal") {
                    Some(t) => self.object(t, &tp),
                    None => {
                        self.issue(&tp, "required object {reward, cost} is missing");
                        None
                    }
                };
                let (reward, cost) = match terminal {
                    Some(t) => {
                        self.known_keys(t, &tp, &["reward", "cost"]);
                        (self.number(t, "reward", &tp), self.number(t, "cost", &tp))
                    }
                    None => (None, None),
                };
                let ep = join(path, "epsilon");
                let epsilon = match obj.get("epsilon") {
                    Some(Value::Array(_)) => self.as_numbers(&obj["epsilon"], &ep),
                    Some(x) => self.as_number(x, &ep).map(|e| vec![e]),
                    None => {
                        self.issue(ep, "required number or array is missing");
                        None
                    }
                };
                let lambda = self.opt_number(obj, "lambda", path).unwrap_or(0.5);
                if !(0.0..=1.0).contains(&lambda) {
                    self.issue(join(path, "lambda"), "must lie in [0, 1]");
                }
                Some(MenuSpec::Finite {
                    terminal_reward: reward?,
                    terminal_cost: cost?,
                    epsilon: epsilon?,
                    lambda,
                })
            }
            "fixed_reward" => {
                self.known_keys(obj, path, &["method", "reward", "range", "points"]);
                let reward = self.number(obj, "reward", path);
                let range = self.numbers(obj, "range", path);
                let points = grid.or(self.opt_count(obj, "points", path, 2).map(|n| n as usize));
                let range = range?;
                if range.len() != 2 || !(range[0] < range[1]) {
                    self.issue(join(path, "range"), "expected [lo, hi] with lo < hi");
                    return None;
                }
                Some(MenuSpec::FixedReward {
                    reward: reward?,
                    lo: range[0],
                    hi: range[1],
                    points: points.unwrap_or(DEFAULT_POINTS),
                })
            }
            "varying_reward" => {
                self.known_keys(
                    obj,
                    path,
                    &[
                        "method",
                        "worst_type",
                        "reward",
                        "base_tau",
                        "base_cost",
                        "eta",
                        "epsilon",
                        "lower_type",
                        "points",
                    ],
                );
                let worst_type = self.number(obj, "worst_type", path);
                let reward = self.number(obj, "reward", path);
                let base_tau = self.opt_number(obj, "base_tau", path);
                let base_cost = self.opt_number(obj, "base_cost", path);
                let lower_type = self.opt_number(obj, "lower_type", path);
                let points = grid.or(self.opt_count(obj, "points", path, 2).map(|n| n as usize));
                let schedule = match (obj.get("eta"), obj.get("epsilon")) {
                    (Some(e), None) => self
                        .as_number(e, &join(path, "eta"))
                        .map(|eta| Schedule::Quadratic { eta }),
                    (None, Some(t)) => {
                        let tp = join(path, "epsilon");
                        let t = self.object(t, &tp)?;
                        let z = self.numbers(t, "z", &tp);
                        let eps = self.numbers(t, "eps", &tp);
                        Some(Schedule::Tabulated { z: z?, eps: eps? })
                    }
                    _ => {
                        self.issue(join(path, "eta"), "give exactly one of `eta` or `epsilon`");
                        None
                    }
                };
                Some(MenuSpec::VaryingReward {
                    worst_type: worst_type?,
                    reward: reward?,
                    base_tau,
                    base_cost,
                    schedule: schedule?,
                    lower_type,
                    points: points.unwrap_or(64),
                })
            }
            _ => {
                self.known_keys(obj, path, &["method", "support", "values", "subgradients"]);
                let support = self.numbers(obj, "support", path);
                let values = self.numbers(obj, "values", path);
                let subgradients = self.numbers(obj, "subgradients", path);
                Some(MenuSpec::FromPotential {
                    support: support?,
                    values: values?,
                    subgradients: subgradients?,
                })
            }
        }
    }

    fn simulation(&mut self, v: Option<&Value>, seed: Option<u64>) -> SimulationSpec {
        let path = "/simulation";
        let mut spec = SimulationSpec {
            n: 100_000,
            seed: 0,
            stratified: false,
        };
        if let Some(obj) = v.and_then(|v| self.object(v, path)) {
            self.known_keys(obj, path, &["n", "seed", "stratified"]);
            spec.n = self.opt_count(obj, "n", path, 1).unwrap_or(spec.n);
            spec.seed = self.opt_count(obj, "seed", path, 0).unwrap_or(0);
            match obj.get("stratified") {
                None => {}
                Some(Value::Bool(b)) => spec.stratified = *b,
                Some(_) => self.issue(join(path, "stratified"), "expected a boolean"),
            }
        }
        if let Some(s) = seed {
            spec.seed = s;
        }
        spec
    }

    fn frontier(&mut self, v: &Value, grid: Option<usize>) -> Option<(TwoTypes, usize)> {
        let path = "/frontier";
        let obj = self.object(v, path)?;
        self.known_keys(obj, path, &["types", "weights", "resolution"]);
        let types = self.numbers(obj, "types", path)?;
        let weights = match obj.get("weights") {
            Some(w) => self.as_numbers(w, &join(path, "weights"))?,
            None => vec![0.5, 0.5],
        };
        let resolution = grid
            .or(self.opt_count(obj, "resolution", path, 2).map(|n| n as usize))
            .unwrap_or(DEFAULT_FRONTIER_RESOLUTION);
        if types.len() != 2 || weights.len() != 2 {
            self.issue(join(path, "types"), "frontier needs exactly two types and two weights");
            return None;
        }
        if (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
            self.issue(join(path, "weights"), "weights must sum to 1");
            return None;
        }
        let two = self.check(TwoTypes::new(types[0], types[1], weights[0]), &join(path, "types"))?;
        Some((two, resolution))
    }

    fn sensitivity(&mut self, v: &Value, grid: Option<usize>) -> Option<SensitivitySpec> {
        let path = "/sensitivity";
        let obj = self.object(v, path)?;
        self.known_keys(obj, path, &["actual_theta1", "points"]);
        let actual = self.numbers(obj, "actual_theta1", path)?;
        for (i, t) in actual.iter().enumerate() {
            if let Err(e) = TestModel::gaussian_mean(*t) {
                self.issue(format!("{path}/actual_theta1/{i}"), e.to_string());
            }
        }
        let points = grid
            .or(self.opt_count(obj, "points", path, 2).map(|n| n as usize))
            .unwrap_or(screening_core::sensitivity::DEFAULT_SWEEP_POINTS);
        Some(SensitivitySpec {
            actual_theta1: actual,
            points,
        })
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str, base_dir: &Path, overrides: Overrides) -> Result<RunConfig, ConfigErrors> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        ConfigErrors(vec![Issue {
            pointer: String::new(),
            message: format!("invalid JSON: {e}"),
        }])
    })?;
    let mut p = Parser {
        issues: Vec::new(),
        base_dir,
    };
    let Some(obj) = p.object(&root, "") else {
        return Err(ConfigErrors(p.issues));
    };
    p.known_keys(
        obj,
        "",
        &[
            "version",
            "test",
            "objective",
            "population",
            "menu",
            "simulation",
            "frontier",
            "sensitivity",
            "evaluate",
            "output",
        ],
    );
    match obj.get("version").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => {}
        Some(v) => p.issue(
            "/version",
            format!("unsupported schema version {v}; expected {SCHEMA_VERSION}"),
        ),
        None => p.issue("/version", format!("required integer; expected {SCHEMA_VERSION}")),
    }
    let test = match obj.get("test") {
        Some(v) => p.test(v),
        None => {
            p.issue("/test", "required section is missing");
            None
        }
    };
    let objective = match obj.get("objective") {
        Some(v) => p.objective(v),
        None => {
            p.issue("/objective", "required section is missing");
            None
        }
    };
    let population = obj.get("population").and_then(|v| p.population(v));
    let menu = obj.get("menu").and_then(|v| p.menu(v, overrides.grid));
    let simulation = p.simulation(obj.get("simulation"), overrides.seed);
    let frontier = obj.get("frontier").and_then(|v| p.frontier(v, overrides.grid));
    let sensitivity = obj.get("sensitivity").and_then(|v| p.sensitivity(v, overrides.grid));

    let mut return_etas = Vec::new();
    let mut return_points = DEFAULT_RETURN_POINTS;
    if let Some(ev) = obj.get("evaluate").and_then(|v| p.object(v, "/evaluate")) {
        p.known_keys(ev, "/evaluate", &["etas", "points"]);
        if let Some(e) = ev.get("etas") {
            return_etas = p.as_numbers(e, "/evaluate/etas").unwrap_or_default();
            if let Some(i) = return_etas.iter().position(|e| !(*e > 0.0)) {
                p.issue(format!("/evaluate/etas/{i}"), "eta must be positive");
            }
        }
        return_points = p
            .opt_count(ev, "points", "/evaluate", 2)
            .map_or(return_points, |n| n as usize);
    }

    let mut output_dir = None;
    if let Some(out) = obj.get("output").and_then(|v| p.object(v, "/output")) {
        p.known_keys(out, "/output", &["dir"]);
        match out.get("dir") {
            Some(Value::String(d)) => output_dir = Some(base_dir.join(d)),
            Some(_) => p.issue("/output/dir", "expected a directory path"),
            None => {}
        }
    }

    if !p.issues.is_empty() {
        return Err(ConfigErrors(p.issues));
    }
    Ok(RunConfig {
        test: test.expect("no issues recorded"),
        objective: objective.expect("no issues recorded"),
        population,
        menu,
        simulation,
        frontier,
        sensitivity,
        return_etas,
        return_points,
        output_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigErrors> {
        parse_config(text, Path::new("."), Overrides::default())
    }

    fn pointers(e: &ConfigErrors) -> Vec<&str> {
        e.0.iter().map(|i| i.pointer.as_str()).collect()
    }

    const MINIMAL: &str = r#"{"version": 1, "test": {"kind": "gaussian_mean", "theta1": 1},
        "objective": {"kind": "fdr", "alpha": 0.25}}"#;

    #[test]
    fn minimal_config_parses() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.test, TestModel::gaussian_mean(1.0).unwrap());
        assert_eq!(c.objective, PrincipalObjective::fdr(0.25).unwrap());
        assert!(c.menu.is_none());
        assert_eq!(c.simulation.n, 100_000);
    }

    #[test]
    fn bad_alpha_points_at_field() {
        let e = parse(&MINIMAL.replace("0.25", "1.5")).unwrap_err();
        assert_eq!(pointers(&e), vec!["/objective/alpha"]);
    }

    #[test]
    fn unknown_method_lists_allowed() {
        let text = MINIMAL.replace("}}", r#"}, "menu": {"method": "magic"}}"#);
        let e = parse(&text).unwrap_err();
        assert_eq!(pointers(&e), vec!["/menu/method"]);
        for m in MENU_METHODS {
            assert!(e.to_string().contains(m));
        }
    }

    #[test]
    fn collects_several_issues() {
        let e = parse(r#"{"version": 2, "test": {"kind": "gaussian_mean", "theta1": -1}, "extra": 1}"#).unwrap_err();
        let p = pointers(&e);
        assert!(p.contains(&"/version"));
        assert!(p.contains(&"/test/theta1"));
        assert!(p.contains(&"/extra"));
        assert!(p.contains(&"/objective"));
    }

    #[test]
    fn overrides_apply() {
        let text = MINIMAL.replace(
            "}}",
            r#"}, "menu": {"method": "fixed_reward", "reward": 100, "range": [0.43, 0.86], "points": 12},
               "simulation": {"seed": 3}}"#,
        );
        let c = parse_config(
            &text,
            Path::new("."),
            Overrides {
                seed: Some(9),
                grid: Some(40),
            },
        )
        .unwrap();
        assert_eq!(c.simulation.seed, 9);
        assert!(matches!(c.menu, Some(MenuSpec::FixedReward { points: 40, .. })));
    }

    #[test]
    fn inline_table_model() {
        let text = r#"{"version": 1, "objective": {"kind": "bayes", "omega0": 1, "omega1": 2},
            "test": {"kind": "tabulated", "table": [[0, 0], [0.2, 0.5], [1, 1]]}}"#;
        let c = parse(text).unwrap();
        assert!(matches!(c.test, TestModel::Tabulated(_)));
        let bad = text.replace("[0.2, 0.5]", "[0.2, 0.1]");
        assert_eq!(pointers(&parse(&bad).unwrap_err()), vec!["/test/table"]);
    }
}
