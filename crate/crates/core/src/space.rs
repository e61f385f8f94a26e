//! Search spaces: parameter specifications, validation and uniform sampling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Where one hyperparameter may take its values.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
    /// Closed on both ends.
    Integer { low: i64, high: i64 },
    Categorical { choices: Vec<String> },
}

impl Domain {
    pub fn kind(&self) -> &'static str {
        match self {
            Domain::Uniform { .. } => "uniform",
            Domain::LogUniform { .. } => "log-uniform",
            Domain::Integer { .. } => "integer",
            Domain::Categorical { .. } => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub domain: Domain,
}

impl ParamSpec {
    pub fn uniform(name: impl Into<String>, low: f64, high: f64) -> Self {
        Self { name: name.into(), domain: Domain::Uniform { low, high } }
    }

    pub fn log_uniform(name: impl Into<String>, low: f64, high: f64) -> Self {
        Self { name: name.into(), domain: Domain::LogUniform { low, high } }
    }

    pub fn integer(name: impl Into<String>, low: i64, high: i64) -> Self {
        Self { name: name.into(), domain: Domain::Integer { low, high } }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            domain: Domain::Categorical { choices: choices.into_iter().map(Into::into).collect() },
        }
    }

    /// Whether `value` has the right tag and lies inside the domain.
    pub fn admits(&self, value: &ParamValue) -> bool {
        match (&self.domain, value) {
            (Domain::Uniform { low, high }, ParamValue::Real(v))
            | (Domain::LogUniform { low, high }, ParamValue::Real(v)) => {
                v.is_finite() && *low <= *v && *v <= *high
            }
            (Domain::Integer { low, high }, ParamValue::Int(v)) => *low <= *v && *v <= *high,
            (Domain::Categorical { choices }, ParamValue::Choice(c)) => choices.contains(c),
            _ => false,
        }
    }

    fn violations(&self, out: &mut Vec<SpaceViolation>) {
        if self.name.is_empty() {
            out.push(SpaceViolation::EmptyName);
        }
        let name = || self.name.clone();
        match &self.domain {
            Domain::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    out.push(SpaceViolation::BadBounds(name()));
                }
            }
            Domain::LogUniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low > 0.0 && low < high) {
                    out.push(SpaceViolation::BadBounds(name()));
                }
            }
            Domain::Integer { low, high } => {
                if low >= high {
                    out.push(SpaceViolation::BadBounds(name()));
                }
            }
            Domain::Categorical { choices } => {
                if choices.is_empty() {
                    out.push(SpaceViolation::EmptyChoices(name()));
                }
                let mut seen = HashSet::new();
                if choices.iter().any(|c| !seen.insert(c)) {
                    out.push(SpaceViolation::DuplicateChoice(name()));
                }
            }
        }
    }
}

/// One assigned hyperparameter value.
///
/// On the wire a real is a JSON float, an integer a JSON integer and a
/// categorical choice a JSON string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Real(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Choice(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Choice(c) => f.write_str(c),
        }
    }
}

/// A full assignment, keyed by parameter name.
pub type Params = BTreeMap<String, ParamValue>;

/// Named parameter specifications, kept in declaration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    /// Parameters ordered by name. Every consumer that must not depend on
    /// declaration order (sampling, fingerprinting, grids) iterates this.
    pub fn sorted(&self) -> Vec<&ParamSpec> {
        let mut sorted: Vec<&ParamSpec> = self.params.iter().collect();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        sorted
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// True iff `params` assigns exactly one admissible value to every parameter.
    pub fn conforms(&self, params: &Params) -> bool {
        params.len() == self.params.len()
            && self.params.iter().all(|spec| params.get(&spec.name).is_some_and(|v| spec.admits(v)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceViolation {
    #[error("search space has no parameters")]
    EmptySpace,
    #[error("parameter name is empty")]
    EmptyName,
    #[error("bad bounds for parameter `{0}`")]
    BadBounds(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("categorical parameter `{0}` has no choices")]
    EmptyChoices(String),
    #[error("categorical parameter `{0}` repeats a choice")]
    DuplicateChoice(String),
    #[error("parameter `{0}` has an unknown kind")]
    UnknownKind(String),
    #[error("parameter `{0}` has fields that do not apply to its kind")]
    UnexpectedField(String),
}

/// Every violation found in a search space, in discovery order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid search space: {}", list(.0))]
pub struct SpaceError(pub Vec<SpaceViolation>);

fn list(violations: &[SpaceViolation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Checks every parameter invariant and reports all violations at once.
pub fn validate_space(space: &SearchSpace) -> Result<(), SpaceError> {
    let mut out = Vec::new();
    if space.params.is_empty() {
        out.push(SpaceViolation::EmptySpace);
    }
    let mut names = HashSet::new();
    for spec in &space.params {
        if !names.insert(spec.name.as_str()) {
            out.push(SpaceViolation::DuplicateName(spec.name.clone()));
        }
        spec.violations(&mut out);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(SpaceError(out))
    }
}

/// Draws each parameter independently and uniformly over its domain
/// (log-uniform parameters uniformly in log space).
pub fn sample_uniform_random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Params {
    space
        .sorted()
        .into_iter()
        .map(|spec| (spec.name.clone(), sample_domain(&spec.domain, rng)))
        .collect()
}

pub(crate) fn sample_domain<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> ParamValue {
    match domain {
        Domain::Uniform { low, high } => {
            let u: f64 = rng.random();
            ParamValue::Real((low + (high - low) * u).clamp(*low, *high))
        }
        Domain::LogUniform { low, high } => {
            let (a, b) = (low.ln(), high.ln());
            let u: f64 = rng.random();
            ParamValue::Real((a + (b - a) * u).exp().clamp(*low, *high))
        }
        Domain::Integer { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
        Domain::Categorical { choices } => {
            ParamValue::Choice(choices[rng.random_range(0..choices.len())].clone())
        }
    }
}

// Wire form: `{"<name>": {"kind": ..., "low": ..., "high": ..., "choices": [...]}, ...}`.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamSpecWire {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    low: Option<serde_json::Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    high: Option<serde_json::Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
}

fn real_number(v: f64) -> serde_json::Number {
    // -0.0 and 0.0 are the same bound.
    let v = if v == 0.0 { 0.0 } else { v };
    serde_json::Number::from_f64(v).unwrap_or_else(|| serde_json::Number::from(0))
}

impl From<&Domain> for ParamSpecWire {
    fn from(domain: &Domain) -> Self {
        let kind = domain.kind().to_owned();
        match domain {
            Domain::Uniform { low, high } | Domain::LogUniform { low, high } => ParamSpecWire {
                kind,
                low: Some(real_number(*low)),
                high: Some(real_number(*high)),
                choices: None,
            },
            Domain::Integer { low, high } => ParamSpecWire {
                kind,
                low: Some((*low).into()),
                high: Some((*high).into()),
                choices: None,
            },
            Domain::Categorical { choices } => {
                ParamSpecWire { kind, low: None, high: None, choices: Some(choices.clone()) }
            }
        }
    }
}

impl ParamSpecWire {
    fn into_spec(self, name: String) -> Result<ParamSpec, SpaceViolation> {
        let real = |n: &Option<serde_json::Number>| n.as_ref().and_then(|n| n.as_f64());
        let domain = match self.kind.as_str() {
            "uniform" | "log-uniform" => {
                if self.choices.is_some() {
                    return Err(SpaceViolation::UnexpectedField(name));
                }
                let (Some(low), Some(high)) = (real(&self.low), real(&self.high)) else {
                    return Err(SpaceViolation::BadBounds(name));
                };
                if self.kind == "uniform" {
                    Domain::Uniform { low, high }
                } else {
                    Domain::LogUniform { low, high }
                }
            }
            "integer" => {
                if self.choices.is_some() {
                    return Err(SpaceViolation::UnexpectedField(name));
                }
                let (Some(low), Some(high)) = (integral(&self.low), integral(&self.high)) else {
                    return Err(SpaceViolation::BadBounds(name));
                };
                Domain::Integer { low, high }
            }
            "categorical" => {
                if self.low.is_some() || self.high.is_some() {
                    return Err(SpaceViolation::UnexpectedField(name));
                }
                Domain::Categorical { choices: self.choices.unwrap_or_default() }
            }
            _ => return Err(SpaceViolation::UnknownKind(name)),
        };
        Ok(ParamSpec { name, domain })
    }
}

fn integral(n: &Option<serde_json::Number>) -> Option<i64> {
    let n = n.as_ref()?;
    if let Some(i) = n.as_i64() {
        return Some(i);
    }
    let f = n.as_f64()?;
    (f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

impl Serialize for SearchSpace {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.params.len()))?;
        for spec in &self.params {
            map.serialize_entry(&spec.name, &ParamSpecWire::from(&spec.domain))?;
        }
        map.end()
    }
}

/// Deserialization keeps declaration order and duplicate keys so that
/// [`validate_space`] can report them; shape errors inside a parameter
/// surface as a deserialization error naming the violation.
impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SpaceVisitor;

        impl<'de> Visitor<'de> for SpaceVisitor {
            type Value = SearchSpace;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from parameter name to parameter specification")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<SearchSpace, A::Error> {
                let mut params = Vec::new();
                while let Some((name, wire)) = access.next_entry::<String, ParamSpecWire>()? {
                    params.push(wire.into_spec(name).map_err(de::Error::custom)?);
                }
                Ok(SearchSpace { params })
            }
        }

        deserializer.deserialize_map(SpaceVisitor)
    }
}
