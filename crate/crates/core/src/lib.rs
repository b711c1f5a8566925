//! Sparse high-dimensional linear Hawkes processes: simulation, exact
//! likelihood, reversible-jump posterior sampling over graphs and kernels,
//! losses, two-step graph selection and study harnesses.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Seed tags spell ASCII words, grouped for readability.
#![allow(clippy::unusual_byte_groupings)]

pub mod error;
pub mod events;
pub mod experiments;
pub mod kernel;
pub mod likelihood;
pub mod losses;
pub mod mcmc;
pub mod model;
pub mod params_io;
pub mod priors;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod two_step;

pub use error::{HawkesError, Result};
pub use events::EventData;
pub use kernel::{HistogramKernel, Kernel, SplineKernel};
pub use likelihood::{log_likelihood, LogLikelihood};
pub use losses::{GraphMetrics, L1Report, LossReport};
pub use mcmc::{McmcConfig, PosteriorSample, PosteriorSummary};
pub use model::{ComponentParams, MassMatrix, NetworkParams};
pub use priors::{PriorSpec, Priors};
pub use rng::Seed;
pub use two_step::ThresholdPolicy;
