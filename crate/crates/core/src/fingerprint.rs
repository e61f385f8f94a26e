//! Canonical study definitions and their SHA-256 fingerprints.
//!
//! The canonical text is the ask-request JSON body with parameters sorted by
//! name, optional configuration fields filled in with their defaults, and
//! floats in shortest round-trip form. Two definitions attach to the same
//! study exactly when their canonical texts are byte-equal.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::space::{ParamSpec, SearchSpace};
use crate::study::StudyProperties;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Fingerprint(bytes.try_into().ok()?))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Fingerprint::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad fingerprint"))
    }
}

/// A full study definition as carried by an ask request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyDefinition {
    pub study_name: String,
    pub properties: StudyProperties,
    pub space: SearchSpace,
}

impl StudyDefinition {
    pub fn new(name: impl Into<String>, space: SearchSpace, properties: StudyProperties) -> Self {
        Self { study_name: name.into(), properties, space }
    }

    pub fn canonical_text(&self) -> String {
        canonical_text(&self.study_name, &self.space, &self.properties)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        canonical_fingerprint(&self.study_name, &self.space, &self.properties)
    }
}

pub fn canonical_text(name: &str, space: &SearchSpace, properties: &StudyProperties) -> String {
    let sorted: Vec<ParamSpec> = space.sorted().into_iter().cloned().collect();
    let def = StudyDefinition {
        study_name: name.to_owned(),
        properties: properties.clone(),
        space: SearchSpace::new(sorted),
    };
    serde_json::to_string(&def).expect("study definitions always serialize")
}

/// SHA-256 over the canonical text. Callers validate the space first.
pub fn canonical_fingerprint(
    name: &str,
    space: &SearchSpace,
    properties: &StudyProperties,
) -> Fingerprint {
    let text = canonical_text(name, space, properties);
    Fingerprint(Sha256::digest(text.as_bytes()).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParamSpec;
    use crate::study::{Direction, PrunerConfig, SamplerConfig};

    fn props(direction: Direction, pruner: PrunerConfig) -> StudyProperties {
        StudyProperties::new(direction, SamplerConfig::tpe(1), pruner)
    }

    #[test]
    fn declaration_order_does_not_matter() {
        let p = props(Direction::Minimize, PrunerConfig::None);
        let xy = SearchSpace::new(vec![ParamSpec::uniform("x", 0.0, 1.0), ParamSpec::uniform("y", 0.0, 1.0)]);
        let yx = SearchSpace::new(vec![ParamSpec::uniform("y", 0.0, 1.0), ParamSpec::uniform("x", 0.0, 1.0)]);
        assert_eq!(canonical_fingerprint("s", &xy, &p), canonical_fingerprint("s", &yx, &p));
    }

    #[test]
    fn direction_is_part_of_identity() {
        let space = SearchSpace::new(vec![ParamSpec::uniform("x", 0.0, 1.0)]);
        assert_ne!(
            canonical_fingerprint("s", &space, &props(Direction::Minimize, PrunerConfig::None)),
            canonical_fingerprint("s", &space, &props(Direction::Maximize, PrunerConfig::None)),
        );
    }

    #[test]
    fn pruner_warmup_is_part_of_identity() {
        let space = SearchSpace::new(vec![ParamSpec::uniform("x", 0.0, 1.0)]);
        assert_ne!(
            canonical_fingerprint("s", &space, &props(Direction::Minimize, PrunerConfig::median(5, 1))),
            canonical_fingerprint("s", &space, &props(Direction::Minimize, PrunerConfig::median(10, 1))),
        );
    }

    #[test]
    fn canonical_text_layout() {
        let space = SearchSpace::new(vec![
            ParamSpec::log_uniform("lr", 1e-5, 0.1),
            ParamSpec::categorical("act", ["relu", "tanh"]),
        ]);
        let text = canonical_text("demo", &space, &props(Direction::Minimize, PrunerConfig::median(5, 3)));
        assert_eq!(
            text,
            concat!(
                r#"{"study_name":"demo","properties":{"direction":"minimize","#,
                r#""sampler":{"kind":"tpe","seed":1,"n_startup_trials":10,"gamma":0.25,"n_candidates":24},"#,
                r#""pruner":{"kind":"median","n_warmup_steps":5,"n_min_trials":3}},"#,
                r#""space":{"act":{"kind":"categorical","choices":["relu","tanh"]},"#,
                r#""lr":{"kind":"log-uniform","low":0.00001,"high":0.1}}}"#
            )
        );
    }

    #[test]
    fn negative_zero_bound_is_zero() {
        let p = props(Direction::Minimize, PrunerConfig::None);
        let a = SearchSpace::new(vec![ParamSpec::uniform("x", -0.0, 1.0)]);
        let b = SearchSpace::new(vec![ParamSpec::uniform("x", 0.0, 1.0)]);
        assert_eq!(canonical_fingerprint("s", &a, &p), canonical_fingerprint("s", &b, &p));
    }
}
