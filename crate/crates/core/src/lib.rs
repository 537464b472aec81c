//! Sequential nowcasting of a low-frequency target from higher-frequency
//! indicators.
//!
//! Monthly indicator series are first projected one quarter ahead through
//! independent discount dynamic linear models ([`projection`]), one per
//! series per release lead. The resulting forecast densities are then
//! synthesized into a single nowcast density by a latent-factor regression
//! whose coefficients and volatility follow their own discount random walks,
//! estimated by a two-block Gibbs sampler ([`synthesis`]). Reference models
//! ([`baselines`]) and trajectory metrics ([`eval`]) support out-of-sample
//! comparison, and [`timegrid`] owns the mixed-frequency bookkeeping that
//! everything else leans on.

pub mod baselines;
pub mod dlm;
pub mod error;
pub mod eval;
pub mod projection;
pub mod rng;
pub mod synthesis;
pub mod timegrid;

pub use error::{MfsError, Result};
