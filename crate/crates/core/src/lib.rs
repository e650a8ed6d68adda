//! Selective classification by one-sided prediction: domain types, exact oracles,
//! a small softmax network, Lagrangian training, model selection and evaluation.

pub mod data;
pub mod error;
pub mod eval;
pub mod family;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod region;
pub mod select;
pub mod synth;
pub mod train;

pub use data::{LabeledDataset, LabeledExample};
pub use error::{Error, Result};
pub use family::{DecisionSetFamily, ScoreRule, SelectiveDecision};
pub use metrics::{evaluate, Metrics};
pub use region::Region;
