//! Analytic benchmark objectives with simulated training curves.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use hopaas_core::{Domain, ParamSpec, Params, SearchSpace};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Sphere,
    Branin,
    NoisyRosenbrock,
}

pub const BRANIN_MINIMUM: f64 = 0.397887;
const ROSENBROCK_NOISE: f64 = 0.1;

pub fn sphere(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

pub fn branin(x: f64, y: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (y - b * x * x + c * x - 6.0).powi(2) + 10.0 * (1.0 - t) * x.cos() + 10.0
}

pub fn rosenbrock(x: f64, y: f64) -> f64 {
    (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Sphere, Objective::Branin, Objective::NoisyRosenbrock];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Sphere => "sphere",
            Objective::Branin => "branin",
            Objective::NoisyRosenbrock => "noisy_rosenbrock",
        }
    }

    pub fn space(self) -> SearchSpace {
        match self {
            Objective::Sphere => {
                SearchSpace::new(vec![ParamSpec::uniform("x0", -5.0, 5.0), ParamSpec::uniform("x1", -5.0, 5.0)])
            }
            Objective::Branin => {
                SearchSpace::new(vec![ParamSpec::uniform("x", -5.0, 10.0), ParamSpec::uniform("y", 0.0, 15.0)])
            }
            Objective::NoisyRosenbrock => {
                SearchSpace::new(vec![ParamSpec::uniform("x", -2.0, 2.0), ParamSpec::uniform("y", -1.0, 3.0)])
            }
        }
    }

    /// Noise-free value; `evaluate` adds observation noise where the
    /// objective has any.
    pub fn value(self, params: &Params) -> f64 {
        let get = |k: &str| params.get(k).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        match self {
            Objective::Sphere => sphere(&[get("x0"), get("x1")]),
            Objective::Branin => branin(get("x"), get("y")),
            Objective::NoisyRosenbrock => rosenbrock(get("x"), get("y")),
        }
    }

    pub fn evaluate<R: Rng + ?Sized>(self, params: &Params, rng: &mut R) -> f64 {
        let v = self.value(params);
        match self {
            Objective::NoisyRosenbrock => v + Normal::new(0.0, ROSENBROCK_NOISE).unwrap().sample(rng),
            _ => v,
        }
    }

    /// Distance between the first reported loss and the final one.
    fn curve_gap(self) -> f64 {
        match self {
            Objective::Sphere => 10.0,
            Objective::Branin => 50.0,
            Objective::NoisyRosenbrock => 100.0,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown objective `{s}` (expected sphere, branin or noisy_rosenbrock)"))
    }
}

/// Simulated per-step training loss
/// `final + (initial - final) * exp(-step / tau(params)) + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub objective: Objective,
    pub steps: u64,
    /// Noise standard deviation as a fraction of the initial gap.
    pub noise: f64,
}

impl Curve {
    pub fn new(objective: Objective, steps: u64) -> Self {
        Curve { objective, steps, noise: 0.005 }
    }

    /// Decay constant between `steps / 4` and `1.5 * steps / 4`, driven by
    /// where the parameters sit in their ranges.
    pub fn tau(&self, params: &Params) -> f64 {
        let space = self.objective.space();
        let mut sum = 0.0;
        let mut n = 0.0;
        for spec in space.params() {
            if let (Domain::Uniform { low, high }, Some(v)) = (&spec.domain, params.get(&spec.name)) {
                if let Some(v) = v.as_f64() {
                    sum += (v - low) / (high - low);
                    n += 1.0;
                }
            }
        }
        let frac = if n > 0.0 { sum / n } else { 0.5 };
        (self.steps as f64 / 4.0).max(1.0) * (1.0 + 0.5 * frac)
    }

    /// Loss after `step` steps of training towards `final_value`.
    pub fn at<R: Rng + ?Sized>(&self, params: &Params, final_value: f64, step: u64, rng: &mut R) -> f64 {
        let gap = self.objective.curve_gap();
        let decay = (-(step as f64) / self.tau(params)).exp();
        let noise = if self.noise > 0.0 { Normal::new(0.0, self.noise * gap).unwrap().sample(rng) } else { 0.0 };
        final_value + gap * decay + noise
    }
}
