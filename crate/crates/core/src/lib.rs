//! Implicit ratings from time-stamped listening logs, with a forgetting
//! factor on old plays, and the collaborative-filtering baselines used to
//! evaluate them.

pub mod error;
pub mod eval;
pub mod latent;
pub mod neighbors;
pub mod playlog;
pub mod ratings;
pub mod scoring;
pub mod synthetic;

pub use error::{Error, Result};
