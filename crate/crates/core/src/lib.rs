//! Lipschitz-constrained variational autoencoders and PAC-Bayesian risk
//! certificates for their reconstruction, regeneration and generation
//! performance.
//!
//! * [`math`]: float64 matrices, a reverse-mode tape, seeded sampling.
//! * [`net`]: Björck-orthonormalized GroupSort networks with a preset
//!   Lipschitz constant.
//! * [`vae`]: encoder/decoder model, losses, objective and trainer.
//! * [`transport`]: closed-form W2 for diagonal Gaussians, exact empirical
//!   W1 via assignment, regenerated/generated samplers.
//! * [`certificates`]: bound assembly and Monte-Carlo diagnostics.
//! * [`data`]: synthetic datasets and diameters.
//! * [`experiment`]: configuration, persistence and the command pipeline.

pub mod certificates;
pub mod data;
pub mod error;
pub mod experiment;
pub mod math;
pub mod net;
pub mod transport;
pub mod vae;

pub use error::{Error, Result};
