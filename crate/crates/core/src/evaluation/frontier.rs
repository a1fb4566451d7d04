use serde::Serialize;

use crate::error::{invalid, Result};
use crate::objectives::{fdr_threshold, TypePopulation};
use crate::test_model::TestModel;

/// Smallest threshold in the log-spaced τ sweep.
const TAU_SWEEP_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveLabel {
    Oracle,
    Uniform,
    GoodOnly,
    BadOnly,
}

impl CurveLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Uniform => "uniform",
            Self::GoodOnly => "good_only",
            Self::BadOnly => "bad_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub label: CurveLabel,
    /// α for the oracle curve, τ for the others.
    pub parameter: f64,
    pub fdr: f64,
    pub tdr: f64,
}

/// A two-type population. The good type has the smaller prior-null probability.
/// Equal types are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTypes {
    pub q_good: f64,
    pub q_bad: f64,
    pub w_good: f64,
}

impl TwoTypes {
    pub fn new(q_good: f64, q_bad: f64, w_good: f64) -> Result<Self> {
        if !(0.0 <= q_good && q_good <= q_bad && q_bad < 1.0) {
            return Err(invalid(format!(
                "need 0 <= q_good <= q_bad < 1, got ({q_good}, {q_bad})"
            )));
        }
        if !(0.0..=1.0).contains(&w_good) {
            return Err(invalid(format!("good-type weight {w_good} outside [0, 1]")));
        }
        Ok(Self { q_good, q_bad, w_good })
    }

    pub fn from_population(population: &TypePopulation) -> Result<Self> {
        match population {
            TypePopulation::Discrete { types, weights } if types.len() == 2 => {
                Self::new(types[0], types[1], weights[0])
            }
            _ => Err(invalid("frontier needs a discrete population with exactly two types")),
        }
    }

    /// Mixture (FDR, TDR) when the good type is tested at `tau_good` and the bad type at `tau_bad`.
    pub fn mixture(&self, tau_good: f64, tau_bad: f64, model: &TestModel) -> (f64, f64) {
        let parts = [
            (self.q_good, self.w_good, tau_good),
            (self.q_bad, 1.0 - self.w_good, tau_bad),
        ];
        let (mut null, mut alt) = (0.0, 0.0);
        for (q, w, tau) in parts {
            null += w * q * model.type_one_error(tau);
            alt += w * (1.0 - q) * model.power(tau);
        }
        let fdr = if null + alt > 0.0 { null / (null + alt) } else { 0.0 };
        (fdr, alt)
    }
}

/// Log-spaced thresholds on [1e-6, 1].
pub fn tau_sweep(resolution: usize) -> Vec<f64> {
    let n = resolution.max(2);
    let lo = TAU_SWEEP_FLOOR.ln();
    (0..n).map(|i| (lo * (1.0 - i as f64 / (n - 1) as f64)).exp()).collect()
}

/// FDR budgets evenly spaced over the open interval (0, 1).
pub fn alpha_sweep(resolution: usize) -> Vec<f64> {
    let n = resolution.max(2);
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

/// The four frontier curves, in the order oracle, uniform, good_only, bad_only.
pub fn frontier(types: &TwoTypes, model: &TestModel, resolution: usize) -> Vec<FrontierPoint> {
    let mut out = Vec::with_capacity(4 * resolution);
    for alpha in alpha_sweep(resolution) {
        let (fdr, tdr) = types.mixture(
            fdr_threshold(types.q_good, alpha, model),
            fdr_threshold(types.q_bad, alpha, model),
            model,
        );
        out.push(FrontierPoint {
            label: CurveLabel::Oracle,
            parameter: alpha,
            fdr,
            tdr,
        });
    }
    let taus = tau_sweep(resolution);
    for (label, pick) in [
        (CurveLabel::Uniform, (true, true)),
        (CurveLabel::GoodOnly, (true, false)),
        (CurveLabel::BadOnly, (false, true)),
    ] {
        for &tau in &taus {
            let tg = if pick.0 { tau } else { 0.0 };
            let tb = if pick.1 { tau } else { 0.0 };
            let (fdr, tdr) = types.mixture(tg, tb, model);
            out.push(FrontierPoint {
                label,
                parameter: tau,
                fdr,
                tdr,
            });
        }
    }
    out
}

/// Points of one curve as (fdr, tdr), sorted by FDR.
pub fn curve(points: &[FrontierPoint], label: CurveLabel) -> Vec<(f64, f64)> {
    let mut c: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.label == label)
        .map(|p| (p.fdr, p.tdr))
        .collect();
    c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    c
}

/// Linear interpolation of a curve sorted by x; None outside its range.
pub fn interpolate_monotone(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = curve.first()?;
    let last = curve.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    let k = curve.partition_point(|p| p.0 < x);
    if k == 0 {
        return Some(
            curve
                .iter()
                .take_while(|p| p.0 == x)
                .map(|p| p.1)
                .fold(f64::NEG_INFINITY, f64::max),
        );
    }
    let (a, b) = (curve[k - 1], curve[k]);
    if b.0 == a.0 {
        return Some(a.1.max(b.1));
    }
    Some(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
}

/// Largest shortfall of `upper` below `lower` at the x-values of `upper`
/// that fall inside the range of `lower` (0 when `upper` dominates).
pub fn dominance_shortfall(upper: &[(f64, f64)], lower: &[(f64, f64)]) -> f64 {
    upper
        .iter()
        .filter_map(|&(x, y)| interpolate_monotone(lower, x).map(|l| l - y))
        .fold(0.0, f64::max)
}

/// TDR of the uniform policy whose mixture FDR equals `target`, by bisection on τ.
pub fn uniform_tdr_at_fdr(types: &TwoTypes, target: f64, model: &TestModel) -> Option<f64> {
    let (f_hi, t_hi) = types.mixture(1.0, 1.0, model);
    if target >= f_hi {
        return (target - f_hi <= 1e-12).then_some(t_hi);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if types.mixture(mid, mid, model).0 <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(types.mixture(lo, lo, model).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{fdr, tdr};

    fn gm(theta: f64) -> TestModel {
        TestModel::gaussian_mean(theta).unwrap()
    }

    #[test]
    fn mixture_reduces_to_single_type() {
        let m = gm(1.0);
        let t = TwoTypes::new(0.4, 0.4, 0.3).unwrap();
        let (f, d) = t.mixture(0.1, 0.1, &m);
        assert!((f - fdr(0.4, 0.1, &m)).abs() < 1e-15);
        assert!((d - tdr(0.4, 0.1, &m)).abs() < 1e-15);
    }

    #[test]
    fn equal_types_oracle_lies_on_uniform_curve() {
        let m = gm(1.0);
        let t = TwoTypes::new(0.5, 0.5, 0.5).unwrap();
        let pts = frontier(&t, &m, 64);
        for p in pts.iter().filter(|p| p.label == CurveLabel::Oracle) {
            let tau = fdr_threshold(0.5, p.parameter, &m);
            let (f, d) = t.mixture(tau, tau, &m);
            assert_eq!((f, d), (p.fdr, p.tdr));
        }
    }

    #[test]
    fn oracle_dominates_uniform() {
        for (qg, qb, theta) in [(0.2, 0.8, 1.0), (0.3, 0.7, 1.0), (0.1, 0.9, 2.0), (0.4, 0.6, 0.5)] {
            let m = gm(theta);
            let t = TwoTypes::new(qg, qb, 0.5).unwrap();
            for p in frontier(&t, &m, 128).iter().filter(|p| p.label == CurveLabel::Oracle) {
                let u = uniform_tdr_at_fdr(&t, p.fdr, &m).unwrap();
                assert!(
                    p.tdr >= u - 1e-9,
                    "{qg},{qb},{theta}: alpha={} {} < {u}",
                    p.parameter,
                    p.tdr
                );
            }
        }
    }

    #[test]
    fn bad_only_below_good_only() {
        let m = gm(1.0);
        let t = TwoTypes::new(0.2, 0.8, 0.5).unwrap();
        let pts = frontier(&t, &m, 256);
        let good = curve(&pts, CurveLabel::GoodOnly);
        let bad = curve(&pts, CurveLabel::BadOnly);
        assert!(dominance_shortfall(&good, &bad) <= 0.0);
        assert!(bad
            .iter()
            .any(|&(x, y)| interpolate_monotone(&good, x).is_some_and(|g| g > y)));
    }

    #[test]
    fn interpolation() {
        let c = [(0.0, 0.0), (0.5, 1.0), (1.0, 1.5)];
        assert_eq!(interpolate_monotone(&c, 0.25), Some(0.5));
        assert_eq!(interpolate_monotone(&c, 0.75), Some(1.25));
        assert_eq!(interpolate_monotone(&c, 1.2), None);
        assert_eq!(interpolate_monotone(&c, 0.0), Some(0.0));
    }

    #[test]
    fn sweeps() {
        let t = tau_sweep(5);
        assert!((t[0] - 1e-6).abs() < 1e-18 && (t[4] - 1.0).abs() < 1e-15);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let a = alpha_sweep(3);
        assert_eq!(a, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn rejects_non_two_type() {
        let p = TypePopulation::equally_weighted(vec![0.2, 0.4, 0.6]).unwrap();
        assert!(TwoTypes::from_population(&p).is_err());
        assert!(TwoTypes::new(0.6, 0.4, 0.5).is_err());
    }
}
