//! Composite behavioral model for detecting identity theft in location-based
//! social networks.
//!
//! A composite behavior pairs a check-in venue with the words of the tip
//! posted there. The joint model ([`joint`]) explains each user's behaviors
//! through latent communities and topics; [`scoring`] turns the fitted model
//! into per-behavior anomaly scores; [`eval`] runs the detection
//! experiments. [`augment`] densifies sparse users before training and
//! [`baselines`] holds the comparison detectors.

pub mod augment;
pub mod baselines;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod joint;
pub mod matrix;
mod optim;
pub mod rng;
pub mod scoring;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use optim::StepSchedule;
