//! The full explain run shared by the command line and the HTTP service.

use std::sync::atomic::AtomicUsize;

use crate::annotation::ClusterAssignment;
use crate::artifact::{Artifact, RunConfig};
use crate::cluster_model::centroids;
use crate::dataset::{standardize, Dataset};
use crate::embedding::Embedding;
use crate::error::{AnnotationError, DataError, Result};
use crate::shapley::explain_all_with_progress;
use crate::summaries::summarize;

/// Scales the data, builds centroids, explains the held-out rows and
/// summarises them. `progress` counts finished rows.
pub fn run(
    d: &Dataset,
    e: &Embedding,
    a: &ClusterAssignment,
    cfg: &RunConfig,
    progress: Option<&AtomicUsize>,
) -> Result<Artifact> {
    if e.len() != d.n_rows() {
        return Err(DataError::RowCountMismatch { expected: d.n_rows(), got: e.len() }.into());
    }
    if a.len() != d.n_rows() {
        return Err(AnnotationError::InvalidAssignment(format!(
            "{} labels for {} rows",
            a.len(),
            d.n_rows()
        ))
        .into());
    }
    let scaled = standardize(d, cfg.standardize);
    let cs = centroids(&scaled, a)?;
    let em = explain_all_with_progress(&scaled, a, &cs, &cfg.explain, progress)?;
    let summaries = summarize(&em, &cfg.summaries)?;
    Ok(Artifact::new(d, e, a, cfg, &em, summaries))
}

/// Number of rows [`run`] will explain, for progress reporting.
pub fn planned_rows(a: &ClusterAssignment, fraction: f64) -> usize {
    a.sizes()
        .iter()
        .map(|&s| {
            if s < 2 {
                0
            } else {
                ((fraction * s as f64).round() as usize).clamp(1, s - 1)
            }
        })
        .sum()
}
