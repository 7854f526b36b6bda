//! C ABI for `gpmhe`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`,
//! `*_fit`, `*_train` or `*_load` and released with the matching `*_free`.
//! Every fallible function returns a [`GpmheStatus`]; on failure the
//! message is available from [`gpmhe_last_error_message`] on the same
//! thread. Matrices are row-major. The header lives in `include/gpmhe.h`.

mod bounds;
mod estimator;
mod gp;
mod model;
mod status;

pub use bounds::*;
pub use estimator::*;
pub use gp::*;
pub use model::*;
pub use status::{gpmhe_last_error_message, GpmheStatus};
