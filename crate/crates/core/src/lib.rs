//! Core library for corpus curation and training-data planning.
//!
//! The crate is organized around the stages of a data pipeline:
//!
//! - [`corpus_clean`]: de-duplication, heuristic filtering, embedding
//!   clustering, and the external quality-scorer gateway.
//! - [`mix_optimizer`]: perplexity-curve fitting and the iterative
//!   data-mix reweighting algorithm.
//! - [`longctx_planner`]: length bucketing, short/long blending, and
//!   context-extension annealing plans.
//! - [`pref_builder`]: preference-pair construction for DPO.
//! - [`rl_curation`]: RL dataset stratification, reward computation,
//!   and verifiable-constraint checking.
//! - [`pack_avg`]: sequence packing and checkpoint averaging.

pub mod corpus_clean;
pub mod jsonl;
pub mod longctx_planner;
pub mod mix_optimizer;
pub mod pack_avg;
pub mod pref_builder;
pub mod rl_curation;

pub use corpus_clean::{Document, FilterReport, FilterRuleSet};
pub use mix_optimizer::{MixState, PerplexityObservation};
pub use pref_builder::{PreferencePair, ResponseRecord};
pub use rl_curation::RolloutRecord;
