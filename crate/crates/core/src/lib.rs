//! Quantum radiance fields at desk scale: a dense statevector simulator,
//! data encoders and parameterized circuit templates, the hybrid
//! (color, density) field model and its training loop, a classical volume
//! renderer with image metrics, and Grover-counting numerical integration.

pub mod count;
pub mod encoding;
pub mod error;
pub mod exec;
pub mod io;
pub mod model;
pub mod pqc;
pub mod render;
pub mod sim;
pub mod tasks;

pub use error::{Error, Result};
pub use exec::Execution;
