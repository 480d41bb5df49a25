//! Float64 linear algebra, reverse-mode autodiff and the seeded random source.

pub mod autodiff;
pub mod matrix;
pub mod rng;

pub use autodiff::{Gradients, Graph, Var};
pub use matrix::Matrix;
pub use rng::Rng;
