//! Shapley-value explanations of clusters drawn in a two-dimensional layout.
//!
//! A cluster annotation over an embedding defines centroids in feature space.
//! Each sample's L1-normalised distances to those centroids act as a
//! probability-like model output, and every held-out sample gets a per-feature
//! additive attribution toward every cluster output.

pub mod annotation;
pub mod artifact;
pub mod cluster_model;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod hierarchy;
pub mod linalg;
pub mod pipeline;
pub mod shapley;
pub mod summaries;
pub mod synthetic;

pub use annotation::{annotate, AnnotationMethod, AnnotationSpec, ClusterAssignment, LassoPolygon};
pub use artifact::{load_explanation, save_explanation, Artifact, RunConfig, SCHEMA};
pub use cluster_model::{centroids, cluster_probability, CentroidSet};
pub use dataset::{load_dataset, parse_dataset, standardize, Dataset, Standardize};
pub use embedding::{load_embedding, parse_embedding, pca_embed, pca_or_fallback, Embedding};
pub use error::{AnnotationError, ArtifactError, DataError, Error, ModelError, Result};
pub use summaries::{summarize, SummaryArtifacts, SummaryConfig};
pub use shapley::{
    exact_shapley, explain_all, kernel_shap_explain, marginalize, split, BackgroundSet, Coalition,
    ExplainConfig, ExplanationMatrix,
};
