//! Hidden Markov nested effects models.
//!
//! Infers a time-varying signalling network from perturbation effect data.
//! Each timepoint holds a transitively closed network explained by a nested
//! effects emission, and consecutive networks are tied by a geometric
//! transition kernel whose smoothness `λ` is sampled jointly with the path.

pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod io;
pub mod likelihood;
pub mod numeric;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod simulator;
pub mod transition;

pub use error::{Error, Result};
pub use graph::{GraphDistance, Network, StateMatrix};
pub use likelihood::{EffectDataset, EmissionModel, ErrorRates, Observations};
pub use posterior::{expected_network, ExpectedNetwork};
pub use sampler::{run_chain, run_chains_parallel, SamplerConfig, TimeCourse, Trace};
pub use transition::{Smoothness, TransitionKernel};
