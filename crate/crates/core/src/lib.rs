//! Model-based clustering of objects via a Gram-matrix transform, a
//! Ward-initialized classification EM, and BIC selection of the number of
//! clusters. Also ships the synthetic-mixture tools used to check the
//! transform's concentration behaviour.

pub mod assignment;
pub mod data;
pub mod dataset;
pub mod error;
pub mod hierarchy;
pub mod metrics;
pub mod mixture;
pub mod select;
pub mod synth;
pub mod transform;

pub use assignment::ClusterAssignment;
pub use data::{gram, gram_unchecked, preprocess_dataset, standardize_columns, FeatureMatrix, GramMatrix};
pub use dataset::{read_csv, read_csv_path, CsvOptions, Dataset};
pub use error::{Error, Result};
pub use hierarchy::{cut_tree, ward_dendrogram, Dendrogram, Merge};
pub use metrics::{ami, AmiNormalization};
pub use mixture::{cem_fit, CovarianceModel, FitResult, MixtureParams};
pub use select::{gmcluster, BicEntry, ClusterConfig, ClusterOutput, Preprocess, Timings};
pub use synth::{
    concentration_sweep, empirical_concentration, gen_mixture, lemma1_check, lemma2_bound, BoundInputs, MixtureSpec,
    MixtureTemplate,
};
pub use transform::{build_m, theta_expectations, update_m_delta, MMatrix, ThetaMatrix};
