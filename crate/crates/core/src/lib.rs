//! Simulation and verification toolkit for measurement-device-independent
//! (MDI) entanglement detection of continuous-variable states.
//!
//! - [`gaussian`]: phase-space Gaussian states, symplectic maps and loss channels.
//! - [`priors`]: prior Fisher information and the separable Bayesian bound.
//! - [`sampler`]: Monte Carlo rounds of the coherent-state / homodyne MDI protocol.
//! - [`witness`]: Duan witness, MDI score, separable bounds, κ optimisation and contour data.
//! - [`fock`]: truncated Fock-space checks of the POVM/witness correspondence and tomography.

pub mod error;
pub mod fock;
pub mod gaussian;
pub mod priors;
pub mod quadrature;
pub mod sampler;
pub mod witness;

pub use error::{Error, Result};
pub use gaussian::{BeamSplitterConvention, GaussianState, LossChannel, SymplecticMap};
