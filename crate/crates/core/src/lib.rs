//! Core of the hopaas optimization service: search spaces, study identity,
//! trial lifecycle, the samplers and pruner that drive a study, and the
//! durable store behind them.

pub mod fingerprint;
pub mod pruner;
pub mod sampler;
pub mod space;
pub mod storage;
pub mod study;

pub use fingerprint::{canonical_fingerprint, canonical_text, Fingerprint, StudyDefinition};
pub use space::{sample_uniform_random, validate_space, Domain, ParamSpec, ParamValue, Params, SearchSpace};
pub use study::{
    Direction, Outcome, PrunerConfig, SamplerConfig, SamplerKind, Study, StudyId, StudyProperties, Trial,
    TrialId, TrialState,
};
