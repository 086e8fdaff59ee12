//! Small reverse-mode automatic differentiation engine over dense
//! row-major matrices, with the handful of layers and the optimizer the
//! trajectory model needs. Generic over `f32` and `f64`.

mod graph;
mod matrix;
pub mod nn;
mod optim;
mod params;
mod real;

pub use graph::{Gradients, Graph, GridShape, NodeId, ZERO_SLOT};
pub use matrix::Matrix;
pub use optim::{Adam, AdamState};
pub use params::{ParamId, ParamStore};
pub use real::Real;
