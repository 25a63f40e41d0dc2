//! Correlated Gaussian noise mechanisms for real-valued traces under conditional inferential
//! privacy (CIP).
//!
//! A trace is modelled as a draw from a Gaussian-process prior. The toolkit measures how much
//! an adversary who knows that prior can learn about a set of sensitive points from a noisy
//! release, designs noise covariances by semidefinite programming, and evaluates them against
//! a Bayesian adversary.
//!
//! Modules, bottom up:
//! * [`gp`]: kernels, conditionals, Renyi divergences, sampling.
//! * [`secrets`]: secret sets and discriminative pairs.
//! * [`mechanism`]: structured noise covariances, baselines, file format.
//! * [`loss`]: exact losses, certified bounds, conversions.
//! * [`sdp`]: the built-in interior-point solver and the mechanism designers.
//! * [`adversary`]: posterior uncertainty of a GP adversary.
//! * [`trace`]: trace CSV input, preprocessing and lengthscale fitting.

pub mod adversary;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod loss;
pub mod mechanism;
pub mod sdp;
pub mod secrets;
pub mod trace;

pub use error::{Error, Result};
pub use gp::{KernelFamily, KernelSpec, Mvn};
pub use mechanism::{NoiseMechanism, UtilityBudget};
pub use secrets::{SecretKind, SecretSet};
