//! One-dimensional Parzen estimators used by the TPE sampler.
//!
//! Numeric parameters are modelled in an internal coordinate: the raw value
//! for uniform, its logarithm for log-uniform, and the real line over
//! `[low - 0.5, high + 0.5]` for integers. The mixture has one equally
//! weighted Gaussian kernel per observation, truncated to the support, plus
//! a uniform background component of the same weight.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use statrs::function::erf::{erf, erf_inv};

use super::SamplerError;
use crate::space::{Domain, ParamSpec, ParamValue};

/// Floor on kernel bandwidth, as a fraction of the support width.
const MIN_BANDWIDTH_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coordinate {
    Linear,
    Log,
    Integer { low: i64, high: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericParzen {
    lower: f64,
    upper: f64,
    centers: Vec<f64>,
    bandwidths: Vec<f64>,
    /// Normalizing mass of each truncated kernel inside the support.
    masses: Vec<f64>,
    coordinate: Coordinate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalParzen {
    choices: Vec<String>,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParzenDensity {
    Numeric(NumericParzen),
    Categorical(CategoricalParzen),
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Fits a density to observed values of one parameter. An empty list gives
/// the uniform background alone.
pub fn fit_parzen(values: &[&ParamValue], spec: &ParamSpec) -> Result<ParzenDensity, SamplerError> {
    if let Some(bad) = values.iter().find(|v| !spec.admits(v)) {
        return Err(SamplerError::ValueOutOfRange { name: spec.name.clone(), value: bad.to_string() });
    }
    let (lower, upper, coordinate) = match &spec.domain {
        Domain::Uniform { low, high } => (*low, *high, Coordinate::Linear),
        Domain::LogUniform { low, high } => (low.ln(), high.ln(), Coordinate::Log),
        Domain::Integer { low, high } => {
            (*low as f64 - 0.5, *high as f64 + 0.5, Coordinate::Integer { low: *low, high: *high })
        }
        Domain::Categorical { choices } => {
            let total = (values.len() + choices.len()) as f64;
            let probs = choices
                .iter()
                .map(|c| {
                    let count = values.iter().filter(|v| matches!(v, ParamValue::Choice(x) if x == c)).count();
                    (count as f64 + 1.0) / total
                })
                .collect();
            return Ok(ParzenDensity::Categorical(CategoricalParzen { choices: choices.clone(), probs }));
        }
    };
    let width = upper - lower;
    let bandwidth = (width / values.len().max(1) as f64).max(width * MIN_BANDWIDTH_FRACTION);
    let centers: Vec<f64> = values
        .iter()
        .map(|v| {
            let x = v.as_f64().expect("numeric value admitted by numeric spec");
            if coordinate == Coordinate::Log {
                x.ln()
            } else {
                x
            }
        })
        .collect();
    let bandwidths = vec![bandwidth; centers.len()];
    let masses = centers
        .iter()
        .map(|mu| std_normal_cdf((upper - mu) / bandwidth) - std_normal_cdf((lower - mu) / bandwidth))
        .collect();
    Ok(ParzenDensity::Numeric(NumericParzen { lower, upper, centers, bandwidths, masses, coordinate }))
}

impl NumericParzen {
    fn weight(&self) -> f64 {
        1.0 / (self.centers.len() + 1) as f64
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// Density in the internal coordinate.
    pub fn pdf(&self, z: f64) -> f64 {
        if z < self.lower || z > self.upper {
            return 0.0;
        }
        let kernels: f64 = self
            .centers
            .iter()
            .zip(&self.bandwidths)
            .zip(&self.masses)
            .map(|((mu, sigma), mass)| std_normal_pdf((z - mu) / sigma) / (sigma * mass))
            .sum();
        self.weight() * (1.0 / (self.upper - self.lower) + kernels)
    }

    /// Probability of the interval `[a, b]` (clipped to the support).
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(self.lower), b.min(self.upper));
        if b <= a {
            return 0.0;
        }
        let kernels: f64 = self
            .centers
            .iter()
            .zip(&self.bandwidths)
            .zip(&self.masses)
            .map(|((mu, sigma), mass)| {
                (std_normal_cdf((b - mu) / sigma) - std_normal_cdf((a - mu) / sigma)) / mass
            })
            .sum();
        self.weight() * ((b - a) / (self.upper - self.lower) + kernels)
    }

    fn log_density(&self, value: &ParamValue) -> f64 {
        let density = match (self.coordinate, value) {
            (Coordinate::Integer { .. }, ParamValue::Int(v)) => {
                let v = *v as f64;
                self.mass(v - 0.5, v + 0.5)
            }
            (Coordinate::Log, ParamValue::Real(v)) => self.pdf(v.ln()),
            (Coordinate::Linear, ParamValue::Real(v)) => self.pdf(*v),
            _ => 0.0,
        };
        density.max(f64::MIN_POSITIVE).ln()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        let component = rng.random_range(0..=self.centers.len());
        let z = if component == self.centers.len() {
            self.lower + (self.upper - self.lower) * rng.random::<f64>()
        } else {
            let (mu, sigma) = (self.centers[component], self.bandwidths[component]);
            let lo = std_normal_cdf((self.lower - mu) / sigma);
            let hi = std_normal_cdf((self.upper - mu) / sigma);
            let u = lo + (hi - lo) * rng.random::<f64>();
            let t = SQRT_2 * erf_inv((2.0 * u - 1.0).clamp(-1.0 + 1e-16, 1.0 - 1e-16));
            mu + sigma * t
        };
        let z = z.clamp(self.lower, self.upper);
        match self.coordinate {
            Coordinate::Linear => ParamValue::Real(z),
            Coordinate::Log => ParamValue::Real(z.exp().clamp(self.lower.exp(), self.upper.exp())),
            Coordinate::Integer { low, high } => ParamValue::Int((z.round() as i64).clamp(low, high)),
        }
    }
}

impl CategoricalParzen {
    pub fn probability(&self, choice: &str) -> f64 {
        self.choices.iter().position(|c| c == choice).map_or(0.0, |i| self.probs[i])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        let mut u: f64 = rng.random();
        for (choice, p) in self.choices.iter().zip(&self.probs) {
            if u < *p {
                return ParamValue::Choice(choice.clone());
            }
            u -= p;
        }
        ParamValue::Choice(self.choices.last().expect("at least one choice").clone())
    }
}

impl ParzenDensity {
    /// Log density (numeric), log probability mass (integer, categorical).
    pub fn log_density(&self, value: &ParamValue) -> f64 {
        match (self, value) {
            (ParzenDensity::Numeric(n), v) => n.log_density(v),
            (ParzenDensity::Categorical(c), ParamValue::Choice(x)) => {
                c.probability(x).max(f64::MIN_POSITIVE).ln()
            }
            _ => f64::MIN_POSITIVE.ln(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match self {
            ParzenDensity::Numeric(n) => n.sample(rng),
            ParzenDensity::Categorical(c) => c.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric(d: ParzenDensity) -> NumericParzen {
        match d {
            ParzenDensity::Numeric(n) => n,
            ParzenDensity::Categorical(_) => panic!("expected numeric"),
        }
    }

    /// Trapezoid rule with `n` points; independent of the closed-form mass.
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / (n - 1) as f64;
        let inner: f64 = (1..n - 1).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * f(a) + inner + 0.5 * f(b))
    }

    #[test]
    fn empty_fit_is_uniform() {
        let spec = ParamSpec::uniform("x", 0.0, 1.0);
        let d = numeric(fit_parzen(&[], &spec).unwrap());
        for z in [0.0, 0.3, 0.99, 1.0] {
            assert!((d.pdf(z) - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.pdf(1.5), 0.0);
    }

    #[test]
    fn categorical_add_one_smoothing() {
        let spec = ParamSpec::categorical("c", ["a", "b", "c"]);
        let (a, b) = (ParamValue::Choice("a".into()), ParamValue::Choice("b".into()));
        let ParzenDensity::Categorical(d) = fit_parzen(&[&a, &a, &b], &spec).unwrap() else {
            panic!("expected categorical");
        };
        let expected = [3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0];
        for (p, e) in d.probs().iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fitted_density_integrates_to_one() {
        let spec = ParamSpec::uniform("x", 0.0, 1.0);
        let observations: [&[f64]; 4] = [&[0.5], &[0.0, 1.0], &[0.01, 0.02, 0.5, 0.97, 0.99], &[0.3; 40]];
        for obs in observations {
            let values: Vec<ParamValue> = obs.iter().map(|v| ParamValue::Real(*v)).collect();
            let refs: Vec<&ParamValue> = values.iter().collect();
            let d = numeric(fit_parzen(&refs, &spec).unwrap());
            let integral = trapezoid(|z| d.pdf(z), 0.0, 1.0, 10_000);
            assert!((integral - 1.0).abs() < 1e-4, "{obs:?}: {integral}");
            assert!((d.mass(0.0, 1.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_masses_sum_to_one() {
        let spec = ParamSpec::integer("n", 1, 6);
        let values = [ParamValue::Int(1), ParamValue::Int(2), ParamValue::Int(6)];
        let refs: Vec<&ParamValue> = values.iter().collect();
        let d = fit_parzen(&refs, &spec).unwrap();
        let total: f64 = (1..=6).map(|v| d.log_density(&ParamValue::Int(v)).exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn bandwidth_rule() {
        let spec = ParamSpec::uniform("x", -5.0, 5.0);
        let values: Vec<ParamValue> = (0..4).map(|i| ParamValue::Real(i as f64)).collect();
        let refs: Vec<&ParamValue> = values.iter().collect();
        let d = numeric(fit_parzen(&refs, &spec).unwrap());
        assert!(d.bandwidths().iter().all(|b| (*b - 2.5).abs() < 1e-12));

        let many: Vec<ParamValue> = (0..5000).map(|_| ParamValue::Real(0.0)).collect();
        let refs: Vec<&ParamValue> = many.iter().collect();
        let d = numeric(fit_parzen(&refs, &spec).unwrap());
        assert!(d.bandwidths().iter().all(|b| (*b - 0.01).abs() < 1e-12));
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let spec = ParamSpec::uniform("x", 0.0, 1.0);
        let v = ParamValue::Real(2.0);
        assert!(matches!(fit_parzen(&[&v], &spec), Err(SamplerError::ValueOutOfRange { .. })));
    }

    #[test]
    fn samples_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let specs = [
            ParamSpec::uniform("x", -1.0, 1.0),
            ParamSpec::log_uniform("x", 1e-6, 1.0),
            ParamSpec::integer("x", -3, 3),
        ];
        let observed = [ParamValue::Real(1.0), ParamValue::Real(1.0), ParamValue::Int(3)];
        for (spec, obs) in specs.iter().zip(&observed) {
            let d = fit_parzen(&[obs, obs, obs], spec).unwrap();
            for _ in 0..2000 {
                assert!(spec.admits(&d.sample(&mut rng)));
            }
        }
    }
}
