//! Simple-vs-simple tests on the p-value scale.
//!
//! Under the null the p-value is uniform, so the rejection probability at
//! threshold τ is τ itself. Under the alternative it is the power β₁(τ).

use std::io::Read;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{invalid, Error, Result};
use crate::normal::{normal_cdf, quantile_closed};

/// Largest supported Gaussian effect size. Beyond this the power curve is
/// numerically saturated.
pub const MAX_THETA1: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub enum TestModel {
    /// Z ~ N(θ, 1) with θ ∈ {0, θ₁}, p-value X = 1 − Φ(Z).
    GaussianMean { theta1: f64 },
    /// Power curve given by a monotone table, linearly interpolated.
    Tabulated(PowerTable),
}

/// Knots `(τ, β₁(τ))` of a piecewise-linear power curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    taus: Vec<f64>,
    powers: Vec<f64>,
}

#[derive(Deserialize)]
struct CsvRow {
    tau: f64,
    beta1: f64,
}

impl PowerTable {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 3 {
            return Err(invalid(
                "power table needs the endpoints and at least one interior knot",
            ));
        }
        let taus: Vec<f64> = points.iter().map(|p| p.0).collect();
        let powers: Vec<f64> = points.iter().map(|p| p.1).collect();
        if taus[0] != 0.0 || powers[0] != 0.0 {
            return Err(invalid("power table must start at (0, 0)"));
        }
        let last = taus.len() - 1;
        if taus[last] != 1.0 || powers[last] != 1.0 {
            return Err(invalid("power table must end at (1, 1)"));
        }
        for i in 1..taus.len() {
            if !(taus[i] > taus[i - 1]) {
                return Err(invalid(format!(
                    "power table thresholds must be strictly increasing (row {i})"
                )));
            }
            if powers[i] < powers[i - 1] {
                return Err(invalid(format!("power table must be nondecreasing (row {i})")));
            }
        }
        for i in 1..last {
            if !(powers[i] > taus[i]) {
                return Err(invalid(format!(
                    "power table violates nontrivial power at tau={} (beta1={})",
                    taus[i], powers[i]
                )));
            }
            if powers[i] > 1.0 {
                return Err(invalid(format!("power above one at row {i}")));
            }
        }
        Ok(Self { taus, powers })
    }

    /// Reads a two-column CSV with header `tau,beta1`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "tau" || &headers[1] != "beta1" {
            return Err(invalid("power table CSV header must be `tau,beta1`"));
        }
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            points.push((row.tau, row.beta1));
        }
        Self::new(&points)
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.taus.iter().copied().zip(self.powers.iter().copied())
    }

    fn segment(&self, tau: f64) -> usize {
        // Index i of the segment [taus[i], taus[i+1]] containing tau, taking
        // the right-hand segment at interior knots.
        let n = self.taus.len();
        match self.taus.partition_point(|&t| t <= tau) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    fn slope(&self, i: usize) -> f64 {
        (self.powers[i + 1] - self.powers[i]) / (self.taus[i + 1] - self.taus[i])
    }

    fn eval(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        let i = self.segment(tau);
        self.powers[i] + self.slope(i) * (tau - self.taus[i])
    }

    fn inverse(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        // First knot whose power reaches u; flat segments resolve to their left end.
        let k = self.powers.partition_point(|&b| b < u);
        if k == 0 {
            return 0.0;
        }
        let i = k - 1;
        let s = self.slope(i);
        if s == 0.0 {
            self.taus[i]
        } else {
            (self.taus[i] + (u - self.powers[i]) / s).min(self.taus[i + 1])
        }
    }

    fn is_concave(&self) -> bool {
        (1..self.taus.len() - 1).all(|i| self.slope(i) <= self.slope(i - 1) + 1e-12)
    }

    /// Largest τ̄ such that every segment on `[0, τ̄)` has slope above one.
    fn steep_prefix_end(&self) -> f64 {
        for i in 0..self.taus.len() - 1 {
            if self.slope(i) <= 1.0 {
                return self.taus[i];
            }
        }
        1.0
    }
}

impl TestModel {
    pub fn gaussian_mean(theta1: f64) -> Result<Self> {
        if !(theta1 > 0.0 && theta1 <= MAX_THETA1) {
            return Err(invalid(format!("theta1 must lie in (0, {MAX_THETA1}], got {theta1}")));
        }
        Ok(Self::GaussianMean { theta1 })
    }

    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        Ok(Self::Tabulated(PowerTable::new(points)?))
    }

    /// Type I error β₀(τ) = τ.
    pub fn type_one_error(&self, tau: f64) -> f64 {
        tau.clamp(0.0, 1.0)
    }

    /// Power β₁(τ).
    pub fn power(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        if tau >= 1.0 {
            return 1.0;
        }
        match self {
            // 1 − Φ(Φ⁻¹(1−τ) − θ₁) written without the cancellation in 1 − τ.
            Self::GaussianMean { theta1 } => normal_cdf(theta1 + quantile_closed(tau)),
            Self::Tabulated(table) => table.eval(tau),
        }
    }

    /// β₁′(τ). For tables this is the slope of the segment to the right of τ
    /// (the left segment at τ = 1).
    pub fn power_derivative(&self, tau: f64) -> f64 {
        match self {
            Self::GaussianMean { theta1 } => {
                let z = -quantile_closed(tau);
                (theta1 * z - 0.5 * theta1 * theta1).exp()
            }
            Self::Tabulated(table) => table.slope(table.segment(tau)),
        }
    }

    pub fn supports_likelihood_ratio(&self) -> bool {
        matches!(self, Self::GaussianMean { .. })
    }

    /// Likelihood ratio of the p-value density, alternative over null.
    pub fn likelihood_ratio(&self, x: f64) -> Result<f64> {
        match self {
            Self::GaussianMean { theta1 } => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(invalid(format!("p-value {x} outside (0, 1)")));
                }
                let z = -quantile_closed(x);
                Ok((theta1 * z - 0.5 * theta1 * theta1).exp())
            }
            Self::Tabulated(_) => Err(lr_unsupported()),
        }
    }

    /// Threshold τ with ℒ(τ) = y, clamped to `[0, 1]`.
    pub fn inverse_likelihood_ratio(&self, y: f64) -> Result<f64> {
        match self {
            Self::GaussianMean { theta1 } => {
                if y.is_nan() || y < 0.0 {
                    return Err(invalid(format!("likelihood ratio level {y} is negative")));
                }
                if y == 0.0 {
                    return Ok(1.0);
                }
                if y.is_infinite() {
                    return Ok(0.0);
                }
                let z = y.ln() / theta1 + 0.5 * theta1;
                Ok(normal_cdf(-z).clamp(0.0, 1.0))
            }
            Self::Tabulated(_) => Err(lr_unsupported()),
        }
    }

    /// Draws one p-value from the null or the alternative.
    pub fn sample_pvalue<R: Rng + ?Sized>(&self, is_null: bool, rng: &mut R) -> f64 {
        if is_null {
            return rng.gen::<f64>();
        }
        match self {
            Self::GaussianMean { theta1 } => {
                let noise: f64 = rng.sample(StandardNormal);
                normal_cdf(-(theta1 + noise))
            }
            Self::Tabulated(table) => table.inverse(rng.gen::<f64>()),
        }
    }

    /// Whether β₁ is concave on `[0, 1]`.
    pub fn is_concave(&self) -> bool {
        match self {
            Self::GaussianMean { .. } => true,
            Self::Tabulated(table) => table.is_concave(),
        }
    }

    /// Largest τ̄ with β₁′ > 1 on `(0, τ̄)`.
    pub fn steep_threshold_bound(&self) -> f64 {
        match self {
            // β₁′(τ) = 1 exactly at Φ⁻¹(1 − τ) = θ₁/2.
            Self::GaussianMean { theta1 } => normal_cdf(-0.5 * theta1),
            Self::Tabulated(table) => table.steep_prefix_end(),
        }
    }
}

fn lr_unsupported() -> Error {
    Error::Unsupported("likelihood ratio is only defined for the gaussian_mean model".into())
}
