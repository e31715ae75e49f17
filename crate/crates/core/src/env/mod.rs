//! ChainCraft: a seeded gridworld with a nine-milestone crafting chain.

pub mod action;
pub mod expert;
pub mod items;
pub mod world;

pub use action::{ComposedAction, Head, Movement, Turn, HEADS, HEAD_COUNT, HEAD_SIZES, STEP_MULTIPLIERS};
pub use expert::scripted_expert;
pub use items::{Item, Tile, MILESTONES, MILESTONE_COUNT, TERMINAL_MILESTONE};
pub use world::{ChainCraft, EnvConfig, EpisodeLog, Facing, MilestoneEvent, Observation, StepOutcome, WorldState};
