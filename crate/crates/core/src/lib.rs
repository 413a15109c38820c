//! Bayesian inversion for binary (`+-1`) fields on the periodic unit square.
//!
//! Two posterior formulations share a Gaussian prior built from a fourth-order elliptic
//! precision operator:
//!
//! * phase field: a Ginzburg-Landau double-well density against `N(0, C)`;
//! * level set: the sign of a latent field `v ~ N(0, C^{alpha/2})`.
//!
//! Both are sampled with preconditioned Crank-Nicolson MCMC ([`pcn`]). For linear
//! observations with `r = 0` the phase-field posterior is Gaussian and available in closed
//! form ([`gp`]). The [`energy`] module evaluates the variational functionals behind the
//! phase-field MAP estimator and their sharp-interface limit, plus the perimeter estimator
//! used for level set samples.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod grid;
pub mod observation;
pub mod pcn;
pub mod posterior;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{FieldKind, GridField};
pub use observation::{ObservationLayout, ObservationSet, TruthField};
pub use spectral::{PriorParams, PriorSpectrum, SpectralField};
