//! Schrödinger bridge / entropic optimal transport between sampled
//! distributions, solved in a single bridge-matching pass over a
//! Gaussian-mixture adjusted Schrödinger potential.
//!
//! The crate is organised around the learnable object,
//! [`potential::GaussianMixturePotential`], which provides closed forms for
//! the conditional plan `π_v(x₁|x₀)`, its normaliser `c_v` and the SB drift
//! `g_v(x, t)`. [`trainer`] fits it by regressing the drift onto Brownian
//! bridge targets drawn from any coupling in [`couplings`]. [`oracle`],
//! [`metrics`] and [`hardsb`] supply ground truth, evaluation and
//! independent Monte-Carlo/Langevin estimators used to cross-check the
//! closed forms.

pub mod couplings;
pub mod datasets;
pub mod error;
pub mod hardsb;
pub mod io;
pub mod math;
pub mod metrics;
pub mod oracle;
pub mod potential;
pub mod processes;
pub mod samples;
pub mod trainer;

pub use error::{Error, Result};
pub use potential::GaussianMixturePotential;
pub use samples::Samples;

/// Deterministic RNG used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeded [`Rng`].
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
