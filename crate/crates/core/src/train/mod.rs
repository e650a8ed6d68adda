//! One-sided prediction losses and their descent-ascent training.

mod dg;
mod losses;
mod sgda;

pub use dg::{dg_train, DGConfig};
pub use losses::{
    constraint_loss, dg_loss, lagrangian, restricted_loss, ConstraintLoss, DgLoss, LagrangianState, OspLagrangian,
    OspTerms, RestrictedLoss,
};
pub use sgda::{sgda_from, sgda_train, EpochRecord, LrDecay, TrainConfig, TrainError, TrainLog, TrainOutcome};
