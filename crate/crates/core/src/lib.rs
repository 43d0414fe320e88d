//! Temporal record linkage over maintenance logs: chronological windows,
//! pair scoring with a small feed-forward network, time-ordered clustering
//! and coreference metrics.

pub mod corpus;
pub mod encoding;
pub mod flsim;
pub mod pairgen;
pub mod util;
pub mod metrics;
pub mod scorer;
pub mod clustering;
pub mod synthgen;
pub mod pipeline;
