//! V-trace targets and the actor-critic, entropy and cloning objectives.

pub mod graph;
pub mod objectives;
pub mod vtrace;

pub use objectives::{
    clear_losses, pg_coefficients, pg_loss, total_loss, value_loss, KlDirection, LossComponents, LossWeights,
    Source,
};
pub use vtrace::{vtrace, VTraceInput, VTraceResult};
