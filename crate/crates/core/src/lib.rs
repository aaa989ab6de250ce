pub mod cli;
pub mod densities;
pub mod error;
pub mod lan_harness;
pub mod levy_model;
pub mod malliavin;
pub mod quadrature;
pub mod rng;
pub mod score_fisher;
pub mod simulator;
pub mod stats;

pub use error::{LevyError, Result};
pub use levy_model::{LevyMeasureSpec, Taper, Theta};
