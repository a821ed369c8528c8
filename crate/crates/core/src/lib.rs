//! Sequential-experimentation and ensemble-classification toolkit.
//!
//! The crate has two halves that meet in the CLI:
//!
//! * [`bandit`] and [`sim`] implement Beta-Bernoulli Thompson sampling with a
//!   Monte-Carlo "value remaining" stopping rule, and a simulated user-arrival
//!   harness that runs whole experiments against ground-truth click rates.
//! * [`ensemble`], [`metrics`] and [`dataio`] implement a three-class sentiment
//!   pipeline: label mapping and balancing, majority-vote and logistic-regression
//!   stacking over three base classifiers, and confusion-matrix evaluation.
//!
//! Everything that consumes randomness takes an explicit seed or RNG and is
//! reproducible bit-for-bit for a fixed seed.

pub mod bandit;
pub mod dataio;
pub mod ensemble;
pub mod metrics;
pub mod sim;

pub(crate) mod streams;
