//! Co-clustering wrapper (CCW) for embedding-based collaborative filtering.
//!
//! The toolkit spectrally co-clusters the user-item bipartite graph, trains one
//! global and `k` local embedding models jointly under BPR loss, fuses them with
//! learned local-importance coefficients, and evaluates top-K recommendation
//! quality. The numeric core is generic over the scalar type; the pipeline and
//! CLI use [`Real`].

pub mod clusterqual;
pub mod config;
pub mod corpus;
pub mod embedcf;
pub mod error;
pub mod evalkit;
pub mod linalg;
pub mod report;
pub mod scalar;
pub mod sparse;
pub mod spectral;
pub mod synth;
pub mod train;
pub mod wrapper;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type used by the CLI and the pipeline.
pub type Real = f64;

/// Concrete aliases over the default scalar.
pub type EmbeddingModel = embedcf::EmbeddingModel<Real>;
pub type CcwModel = wrapper::CcwModel<Real>;
pub type LicNetwork = wrapper::LicNetwork<Real>;
pub type TrainConfig = train::TrainConfig<Real>;
pub type EvalReport = evalkit::EvalReport<Real>;
pub type VarianceRatioCurve = clusterqual::VarianceRatioCurve<Real>;
