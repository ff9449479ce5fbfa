//! Dense tensors, differentiable kernels, parameters and optimisation.

pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use gradcheck::{finite_diff_check, Differentiable, GradCheck, StoreFn, TapeFn};
pub use ops::Activation;
pub use optim::{adam_step, LrSchedule};
pub use params::{init_conv, init_linear, Init, ParamEntry, ParamStore};
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
