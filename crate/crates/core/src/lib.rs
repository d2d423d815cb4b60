//! Linearized Bayesian A-optimal electrode placement for electrical impedance
//! tomography with the smoothened complete electrode model.

pub mod bayes;
pub mod contact;
pub mod error;
pub mod forward;
pub mod hashing;
pub mod jacobian;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod oed;
pub mod presets;
pub mod tv;

pub use error::{Error, Result};
