//! Actor-learner fine-tuning, evaluation and the ablation settings.

pub mod eval;
pub mod learner;
pub mod rollout;
pub mod run;
pub mod settings;

pub use eval::{evaluate, evaluate_network, mean_std, EvalReport, ExpertPolicy, NetworkPolicy, Policy, RandomPolicy};
pub use learner::{Learner, LossConstants, PreparedBatch, UpdateStats};
pub use rollout::{ActorWorker, EpisodeSummary, PolicySnapshot};
pub use run::{build_learner, train, train_sync, train_threaded, transplant, MetricsRow, RunOutput};
pub use settings::{AblationConfig, EvalConfig, TrainConfig};
