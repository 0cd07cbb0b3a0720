//! The explanation artifact: one self-contained JSON document holding the
//! dataset description, layout, annotation, run configuration, Shapley
//! values and every summary.

use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotation::ClusterAssignment;
use crate::dataset::{Dataset, Standardize};
use crate::embedding::Embedding;
use crate::error::ArtifactError;
use crate::shapley::{ExplainConfig, ExplanationMatrix};
use crate::summaries::{summarize, ClusterImportance, ClusterSummary, SummaryArtifacts, SummaryConfig};

pub const SCHEMA: &str = "cluster-shapley/1";

/// Largest tolerated `|sum phi + base - f(x)|` in a stored artifact.
pub const LOCAL_ACCURACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub explain: ExplainConfig,
    pub standardize: Standardize,
    pub summaries: SummaryConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: String,
    pub n_rows: usize,
    pub feature_names: Vec<String>,
    pub ground_truth: Option<Vec<i64>>,
    pub label_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingData {
    pub method: String,
    pub coords: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationData {
    pub feature_names: Vec<String>,
    pub base: Vec<f64>,
    pub budget: usize,
    pub test_indices: Vec<usize>,
    pub test_labels: Vec<usize>,
    pub background_indices: Vec<usize>,
    /// `fx[i][c]`.
    pub fx: Vec<Vec<f64>>,
    /// `feature_values[i][j]`.
    pub feature_values: Vec<Vec<f64>>,
    /// `shap_values[c][i][j]`: one n_test x m matrix per cluster output.
    pub shap_values: Vec<Vec<Vec<f64>>>,
}

impl ExplanationData {
    pub fn from_matrix(em: &ExplanationMatrix) -> Self {
        let (n, m, k) = em.phi.dim();
        Self {
            feature_names: em.feature_names.clone(),
            base: em.base.clone(),
            budget: em.budget,
            test_indices: em.test_indices.clone(),
            test_labels: em.test_labels.clone(),
            background_indices: em.background_indices.clone(),
            fx: em.fx.outer_iter().map(|r| r.to_vec()).collect(),
            feature_values: em.feature_values.outer_iter().map(|r| r.to_vec()).collect(),
            shap_values: (0..k)
                .map(|c| (0..n).map(|i| (0..m).map(|j| em.phi[[i, j, c]]).collect()).collect())
                .collect(),
        }
    }

    /// Rebuilds the in-memory matrix. Assumes the shapes were validated.
    pub fn to_matrix(&self) -> ExplanationMatrix {
        let k = self.base.len();
        let n = self.test_indices.len();
        let m = self.feature_names.len();
        ExplanationMatrix {
            feature_names: self.feature_names.clone(),
            phi: Array3::from_shape_fn((n, m, k), |(i, j, c)| self.shap_values[c][i][j]),
            base: self.base.clone(),
            fx: Array2::from_shape_fn((n, k), |(i, c)| self.fx[i][c]),
            test_indices: self.test_indices.clone(),
            test_labels: self.test_labels.clone(),
            feature_values: Array2::from_shape_fn((n, m), |(i, j)| self.feature_values[i][j]),
            background_indices: self.background_indices.clone(),
            budget: self.budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub schema: String,
    pub dataset: DatasetMeta,
    pub embedding: EmbeddingData,
    pub assignment: ClusterAssignment,
    pub config: RunConfig,
    pub explanation: ExplanationData,
    pub summaries: SummaryArtifacts,
}

/// What the detail view of one cluster needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub cluster: usize,
    pub feature_names: Vec<String>,
    pub importance: ClusterImportance,
    #[serde(flatten)]
    pub summary: ClusterSummary,
}

impl Artifact {
    pub fn new(
        d: &Dataset,
        e: &Embedding,
        a: &ClusterAssignment,
        config: &RunConfig,
        em: &ExplanationMatrix,
        summaries: SummaryArtifacts,
    ) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            dataset: DatasetMeta {
                id: d.id().to_string(),
                n_rows: d.n_rows(),
                feature_names: d.feature_names().to_vec(),
                ground_truth: d.ground_truth().map(<[i64]>::to_vec),
                label_names: d.label_names().map(<[String]>::to_vec),
            },
            embedding: EmbeddingData {
                method: e.method_tag().to_string(),
                coords: e.coords().outer_iter().map(|r| [r[0], r[1]]).collect(),
            },
            assignment: a.clone(),
            config: config.clone(),
            explanation: ExplanationData::from_matrix(em),
            summaries,
        }
    }

    pub fn k(&self) -> usize {
        self.explanation.base.len()
    }

    pub fn explanation_matrix(&self) -> ExplanationMatrix {
        self.explanation.to_matrix()
    }

    /// Canonical serialized form: pretty JSON with a trailing newline.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("artifact is serializable");
        out.push(b'\n');
        out
    }

    /// Parses and validates a serialized artifact.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArtifactError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
        if found != SCHEMA {
            return Err(ArtifactError::SchemaVersionMismatch {
                expected: SCHEMA.to_string(),
                found: found.to_string(),
            });
        }
        let artifact: Artifact =
            serde_json::from_value(value).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
        artifact.validate()?;
        Ok(artifact)
    }

    /// Short content hash of the canonical bytes.
    pub fn id(&self) -> String {
        content_id(&self.to_bytes())
    }

    pub fn cluster_view(&self, c: usize) -> Option<ClusterView> {
        let summary = self.summaries.clusters.get(c)?.clone();
        let importance = self.summaries.importance.clusters.get(c)?.clone();
        Some(ClusterView {
            cluster: c,
            feature_names: self.explanation.feature_names.clone(),
            importance,
            summary,
        })
    }

    /// Checks every stored invariant. Errors name the first one violated.
    pub fn validate(&self) -> Result<(), ArtifactError> {
        let fail = |name: &str| Err(ArtifactError::InvariantViolation(name.to_string()));
        let ex = &self.explanation;
        let k = ex.base.len();
        let n = ex.test_indices.len();
        let m = ex.feature_names.len();
        let rows = self.dataset.n_rows;

        let shapes_ok = k >= 2
            && m >= 1
            && self.dataset.feature_names == ex.feature_names
            && self.assignment.len() == rows
            && self.assignment.k() == k
            && self.embedding.coords.len() == rows
            && ex.test_labels.len() == n
            && ex.fx.len() == n
            && ex.fx.iter().all(|r| r.len() == k)
            && ex.feature_values.len() == n
            && ex.feature_values.iter().all(|r| r.len() == m)
            && ex.shap_values.len() == k
            && ex.shap_values.iter().all(|mat| mat.len() == n && mat.iter().all(|r| r.len() == m))
            && ex.test_indices.iter().chain(&ex.background_indices).all(|&i| i < rows)
            && ex
                .test_indices
                .iter()
                .zip(&ex.test_labels)
                .all(|(&i, &c)| self.assignment.labels()[i] == c as i64)
            && self.summaries.clusters.len() == k
            && self.summaries.importance.clusters.len() == k;
        if !shapes_ok {
            return fail("shapes");
        }

        for i in 0..n {
            for c in 0..k {
                let total: f64 = ex.shap_values[c][i].iter().sum();
                if !((total + ex.base[c] - ex.fx[i][c]).abs() <= LOCAL_ACCURACY_TOL) {
                    return fail("local_accuracy");
                }
            }
        }

        let heat = &self.summaries.heatmap;
        if !is_permutation(&heat.row_order, k) {
            return fail("row_order_permutation");
        }
        if !is_permutation(&heat.col_order, heat.features.len()) {
            return fail("col_order_permutation");
        }
        for cl in &self.summaries.importance.clusters {
            let total: f64 = cl.features.iter().map(|f| f.share).sum();
            if !((total - 1.0).abs() <= 1e-9) {
                return fail("importance_shares");
            }
        }
        for cl in &self.summaries.clusters {
            if !is_permutation(&cl.ranking, m) {
                return fail("ranking_permutation");
            }
            for h in &cl.histograms {
                if h.slots.iter().map(|s| s.count).sum::<usize>() != n {
                    return fail("histogram_mass");
                }
            }
            if cl.kde.bins.iter().any(|b| b.count != b.member_indices.len() || b.count == 0) {
                return fail("kde_counts");
            }
        }

        let em = ex.to_matrix();
        match summarize(&em, &self.config.summaries) {
            Ok(s) if s == self.summaries => Ok(()),
            _ => fail("summaries_consistent"),
        }
    }
}

fn is_permutation(order: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    order.len() == n && order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn content_id(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Writes the canonical bytes of `artifact` to `path`.
pub fn save_explanation(artifact: &Artifact, path: &Path) -> Result<(), ArtifactError> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, artifact.to_bytes())
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| ArtifactError::IoError(format!("{}: {e}", path.display())))
}

/// Reads and validates an artifact written by [`save_explanation`].
pub fn load_explanation(path: &Path) -> Result<Artifact, ArtifactError> {
    let bytes = std::fs::read(path)
        .map_err(|e| ArtifactError::IoError(format!("{}: {e}", path.display())))?;
    Artifact::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::run;
    use crate::synthetic::blobs;

    fn artifact() -> Artifact {
        let (d, a) = blobs(60, 3, 3, 4.0, 7);
        let e = crate::embedding::pca_embed(&d).unwrap();
        run(&d, &e, &a, &RunConfig::default(), None).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let art = artifact();
        let bytes = art.to_bytes();
        let back = Artifact::from_bytes(&bytes).unwrap();
        assert_eq!(back, art);
        assert_eq!(back.to_bytes(), bytes);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        save_explanation(&art, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
        assert_eq!(load_explanation(&path).unwrap(), art);
    }

    #[test]
    fn corrupted_phi_breaks_local_accuracy() {
        let mut art = artifact();
        art.explanation.shap_values[0][0][0] += 1e-3;
        assert_eq!(
            Artifact::from_bytes(&art.to_bytes()).unwrap_err(),
            ArtifactError::InvariantViolation("local_accuracy".into())
        );
    }

    #[test]
    fn broken_orders_are_caught() {
        let mut art = artifact();
        art.summaries.heatmap.row_order = vec![0, 0, 1];
        assert_eq!(
            art.validate().unwrap_err(),
            ArtifactError::InvariantViolation("row_order_permutation".into())
        );
    }

    #[test]
    fn tampered_summary_is_caught() {
        let mut art = artifact();
        art.summaries.clusters[1].dot_plot.shapley_max += 1.0;
        assert_eq!(
            art.validate().unwrap_err(),
            ArtifactError::InvariantViolation("summaries_consistent".into())
        );
    }

    #[test]
    fn schema_and_io_errors() {
        let mut art = artifact();
        art.schema = "cluster-shapley/0".into();
        assert!(matches!(
            Artifact::from_bytes(&art.to_bytes()).unwrap_err(),
            ArtifactError::SchemaVersionMismatch { .. }
        ));
        assert!(matches!(
            load_explanation(Path::new("/nonexistent/a.json")).unwrap_err(),
            ArtifactError::IoError(_)
        ));
        assert!(matches!(Artifact::from_bytes(b"{").unwrap_err(), ArtifactError::Malformed(_)));
    }

    #[test]
    fn cluster_view_matches_summaries() {
        let art = artifact();
        let v = art.cluster_view(2).unwrap();
        assert_eq!(v.summary, art.summaries.clusters[2]);
        assert!(art.cluster_view(3).is_none());
        assert_eq!(art.id().len(), 16);
    }
}
