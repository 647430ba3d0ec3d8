//! Bayesian inference for two-period sequentially randomized experiments
//! with noncompliance.
//!
//! Each unit belongs to one latent compliance type (nevertaker, complier,
//! alwaystaker) for both periods. The sampler in [`gibbs`] alternates
//! between the model parameters, the types, and the complier potential
//! outcomes that were never observed, and reports the finite-sample average
//! effect among compliers.
//!
//! ```no_run
//! use seqcomply::{fit, simulate_dataset, DgpConfig, PriorSpec, SamplerConfig};
//! use seqcomply::estimate::FitSummary;
//!
//! let (data, truth) = simulate_dataset(&DgpConfig::with_defaults(500, 1, 7)).unwrap();
//! let result = fit(&SamplerConfig::default(), &data, &PriorSpec::default()).unwrap();
//! let summary = FitSummary::from_fit(&result).unwrap();
//! println!("{:?} vs {:?}", summary.late.mean, truth.true_late);
//! ```

pub mod config;
pub mod domain;
pub mod error;
pub mod estimate;
pub mod gibbs;
pub mod io;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod validate;

pub use config::{parse_config, parse_config_str, Config};
pub use domain::{
    classify_compliance, consistent_types, realized_treatment, Cell, ComplianceType, Contrast,
    Dataset, ObservedUnit, PotentialTable, TypeSet,
};
pub use error::{Error, Result};
pub use gibbs::{fit, FitResult, SamplerConfig, ThetaUpdate};
pub use model::{PriorSpec, Theta};
pub use simulate::{simulate_dataset, true_sample_late, DgpConfig, GroundTruth};
