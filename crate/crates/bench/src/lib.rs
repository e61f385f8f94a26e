//! Desk-scale reproduction of a distributed optimization campaign: analytic
//! objectives with simulated training curves, a random-search oracle, and
//! concurrent workers driving a live server.

pub mod campaign;
pub mod client;
pub mod objective;
pub mod oracle;
pub mod report;
pub mod stats;

pub use campaign::{run_campaign, run_campaign_forked, BenchError, CampaignConfig, PrunerChoice, SamplerChoice};
pub use client::{ClientError, HopaasClient};
pub use objective::{Curve, Objective, BRANIN_MINIMUM};
pub use oracle::{oracle_random_search, oracle_trace};
pub use report::CampaignReport;
