//! Adversarial training of controllers against learned environments,
//! driven by differentiable signal temporal logic requirements.
//!
//! The crate is organized bottom-up: [`autodiff`] records scalar
//! computations on a tape, [`stl`] evaluates requirement robustness on
//! plain or taped signals, [`sim`] rolls out a [`sim::SystemModel`] under a
//! defender and an attacker, [`policy`] holds the networks and [`train`]
//! plays the two against each other. [`systems`] ships the cart-pole and
//! platooning case studies.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod persist;
pub mod policy;
pub mod sim;
pub mod stl;
pub mod systems;
pub mod train;
