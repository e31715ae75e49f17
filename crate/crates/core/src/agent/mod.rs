//! Observation features, factorized action distributions and the actor/critic networks.

pub mod distribution;
pub mod features;
pub mod network;

pub use distribution::{kl_divergence, ComposedDistribution};
pub use features::{nonspatial_width, spatial_width, FeatureBatch, INVENTORY_WIDTH};
pub use network::{
    ActorNetwork, ArchConfig, CriticNetwork, EncoderKind, Network, RecurrentState, Role, SequenceOutput, StepOutput,
};
