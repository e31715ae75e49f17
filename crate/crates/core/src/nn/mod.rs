//! Small dense/conv/recurrent network toolkit with reverse-mode gradients.

pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use layers::{linear_forward, Conv3x3, Linear, LstmCell, ResidualBlock};
pub use optim::{AdamState, Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{Parameter, ParameterSet};
pub use tape::{ConvGeometry, Gradients, Tape, Var};
pub use tensor::RealArray;
