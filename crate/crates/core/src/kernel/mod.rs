//! Minimal differentiable numeric layer.
//!
//! Layers expose `forward`, which returns the output together with a cache,
//! and `backward`, which consumes that cache, accumulates parameter gradients
//! and returns the gradient with respect to the layer input. There is no
//! tape: the model wires backward passes by hand.

mod activation;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod gru;
pub mod init;
mod lstm;
mod param;
mod pool;
mod recurrent;
mod tensor;

pub use activation::{sigmoid, Activation};
pub use conv::{conv_output_len, Conv1d, Conv1dCache};
pub use dense::{Dense, DenseCache};
pub use dropout::{dropout, dropout_backward, DropoutMask, Mode};
pub use gradcheck::{gradcheck, relative_error, FnObjective, GradCheckReport, Objective};
pub use gru::{GruCell, GruStepCache};
pub use lstm::{LstmCell, LstmState, LstmStepCache};
pub use param::{HasParams, Parameter};
pub use pool::{maxpool_backward, maxpool_over_time, PoolCache};
pub use recurrent::{Recurrent, RecurrentCache, RecurrentCell};
pub use tensor::Tensor;

pub(crate) use tensor::{dot, matvec_acc, outer_acc, vecmat_acc};
