//! Decay-rate preservation for ODEs and SDEs whose mean-reversion term is
//! regularly varying at zero.

pub mod config;
pub mod criteria;
pub mod decay_scale;
pub mod diagnostics;
pub mod error;
pub mod nonlinearity;
pub mod ode;
pub mod perturbations;
pub mod quad;
pub mod runner;
pub mod sde;
pub mod table;

pub use decay_scale::{DecayScale, ScaleMode};
pub use error::{Error, Result};
pub use nonlinearity::{Family, NonlinearityModel};
