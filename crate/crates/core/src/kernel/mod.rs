//! Dense matrix kernel with reverse-mode gradients.

pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod rng;
pub mod routing;
pub mod tape;

pub use gradcheck::{finite_difference_check, GradCheckConfig, GradCheckReport};
pub use layers::{conv1d, self_attention, Attended, Conv1d, Linear, Pooling, SelfAttention};
pub use matrix::Matrix;
pub use rng::Rng;
pub use tape::{Gradients, ParamId, ParamStore, Parameter, Tape, Var};
