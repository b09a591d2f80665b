//! Data partitioning, priors and the log-posterior objectives of the
//! single-group and hierarchical two-step models.

mod bmtm;
mod hbmtm;
mod likelihood;
mod neighborhood;
mod priors;

pub use bmtm::{Step1Posterior, Step2Posterior};
pub use hbmtm::{HierStep1Posterior, HierStep2Posterior, Parameterization};
pub use likelihood::{
    adjusted_loglik, mixture_logpdf, truncation_constant, InsideNormalization, MixtureLikelihood, MixtureParams,
    OutsideLikelihood,
};
pub use neighborhood::{partition, validate_neighborhoods, NeighborhoodSpec, Observation, PartitionedData};
pub use priors::{Prior, PriorConfig, PriorMode};
