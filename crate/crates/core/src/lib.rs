//! Bayesian estimation of group sizes and odds ratios under Fisher's
//! noncentral hypergeometric sampling.

pub mod abc;
pub mod data;
pub mod error;
pub mod fnch;
pub mod math;
pub mod mcmc;
pub mod output;
pub mod pipeline;
pub mod prior;
pub mod rng;
pub mod summary;

pub use error::{Error, Result};
pub use fnch::{FnchParams, PairParams, UnivariateFnch};
pub use mcmc::{ChainDraws, McmcConfig, ProposalSpec};
pub use prior::{Prior, PriorSpec};
pub use summary::PosteriorSummary;
