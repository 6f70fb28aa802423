//! Small reverse-mode autodiff engine over dense `f64` matrices.
//!
//! Every backward rule is written in terms of recorded operations, so
//! gradients can be differentiated again (needed for gradient penalties).
//! Graph recording is thread-local; parameter storage ([`ParamStore`]) is
//! plain data and can be shared across threads.

mod backward;
pub mod check;
pub mod nn;
pub mod optim;
pub mod params;
mod segment;
mod var;

pub use backward::{grad, grad_with_seed};
pub use nn::{Activation, Dense, Mlp2};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use segment::{segment_max, segment_mean, segment_softmax, segment_sum};
pub use var::{grad_enabled, no_grad, Index, Matrix, NoGradGuard, Var};
