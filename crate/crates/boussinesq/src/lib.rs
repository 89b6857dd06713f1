//! Spectral simulation laboratory for a stochastic Boussinesq system driven by
//! Gaussian noise on the temperature boundary.
//!
//! The physical setting is a velocity/temperature pair on the box `(0, pi)^d`
//! (`d = 1` or `3`): an incompressible Navier-Stokes equation forced by buoyancy,
//! coupled to an advected temperature whose Dirichlet boundary values fluctuate
//! as a Q-Wiener process of amplitude `sqrt(eps)`. Everything is discretized in
//! the eigenbasis of the Dirichlet Laplacian, so the heat semigroup, fractional
//! powers, Sobolev norms and the Leray projection are all diagonal (or blockwise
//! diagonal) in coefficient space.
//!
//! Pipeline, bottom to top:
//!
//! * [`spectral`]: box domains, sine/cosine tensor bases, grid transforms,
//!   diagonal operator calculus and Sobolev norms.
//! * [`boundary`]: boundary mode bases, the harmonic (Dirichlet) extension map,
//!   admissibility series for noise coefficients, increment sampling.
//! * [`convolution`]: the stochastic convolution `Z_t` (boundary noise pushed
//!   through the heat semigroup), its running supremum, moment diagnostics and
//!   Markov-type tail bounds.
//! * [`temperature`]: Picard solver for the temperature remainder after the
//!   convolution is split off.
//! * [`velocity`]: weak Stokes operator, maximal-regularity norms and the
//!   small-data Navier-Stokes fixed point.
//! * [`coupled`]: stopping time on `||Z||`, the coupled temperature/velocity
//!   driver and its run reports.
//! * [`oracle1d`]: closed-form 1D references used to validate the simulator.
//! * [`harness`]: Monte Carlo ensembles, epsilon-scaling experiments, config
//!   parsing, CSV output and the command-line interface.

pub mod boundary;
pub mod convolution;
pub mod coupled;
pub mod exponents;
pub mod harness;
pub mod oracle1d;
pub mod par;
pub mod series;
pub mod spectral;
pub mod stats;
pub mod temperature;
pub mod velocity;

mod error;

pub use error::{Error, Result};
