//! Photon-count statistics, Bayesian hypothesis testing and measurement-count
//! analysis for detecting a quantum emitter by direct photon counting or by
//! extended Hong–Ou–Mandel interference with a coherent field.
//!
//! The pipeline is: [`photon_stats`] builds outcome tables for a parameter
//! set, [`bayes`] turns a pair of tables (emitter present / absent) into
//! likelihood-ratio moments, confidences and required measurement counts,
//! [`montecarlo`] simulates measurement records, and [`sweep`] compares
//! protocols across parameter grids. [`fock_oracle`] is an independent
//! brute-force evaluation of the interferometer used to validate the
//! closed forms.

pub mod bayes;
pub mod error;
pub mod fock_oracle;
pub mod io;
pub mod montecarlo;
pub mod params;
pub mod photon_stats;
pub mod quad;
pub mod sweep;

pub use bayes::{ConfidenceReport, HypothesisPair, LogLikMoments};
pub use error::{Error, Result};
pub use fock_oracle::OracleConfig;
pub use montecarlo::{EnsembleConfig, Truth, TrajectoryEnsemble};
pub use params::{derived_means, DerivedMeans, Protocol, ProtocolParams};
pub use photon_stats::{apply_saturation, build_distribution, CountDistribution, Outcome};
pub use sweep::{SweepResult, SweepRow, SweepSpec};
