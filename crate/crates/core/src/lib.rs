//! Finite-sample inference for parametric autoregressive models.
//!
//! The crate builds confidence sets and tests from split likelihood ratios:
//! an estimator fitted on a leading block of the series is plugged into the
//! numerator of a conditional likelihood ratio over the trailing block. The
//! ratio has expectation at most one under the true parameter, so Markov's
//! inequality gives finite-sample validity with no asymptotic argument.
//!
//! The same construction run with a non-anticipating sequence of estimators
//! gives a martingale ([`sequential::EProcessState`]), from which
//! anytime-valid tests and confidence sequences follow by Ville's inequality.
//!
//! Module map:
//!
//! * [`model`] AR(p) families, series, simulation, conditional likelihoods.
//! * [`estimation`] least squares and bounded 1-d maximum likelihood.
//! * [`region`] unions of closed intervals and the generic region scanner.
//! * [`split`] split likelihood ratio, confidence regions, P-values.
//! * [`sequential`] the e-process, sequential tests, confidence sequences.
//! * [`baselines`] asymptotic LS intervals and the Dickey-Fuller comparator.
//! * [`experiments`] Monte Carlo studies and report emitters.

pub mod baselines;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod model;
pub mod region;
pub mod rng;
pub mod sequential;
pub mod split;

pub use error::{Error, Result};
pub use estimation::EstimatorSpec;
pub use model::{ArModel, CauchyAr1, Family, InitPolicy, NormalAr1, ParamDomain, TimeSeries};
pub use region::{ConfidenceRegion, ScanConfig};
pub use split::{NullSpec, SplitConfig};
