//! Two-dimensional visual-space coordinates paired with a dataset by row order.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::DataError;
use crate::linalg::jacobi_eigen;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    coords: Array2<f64>,
    dataset_id: String,
    method_tag: String,
}

impl Embedding {
    pub fn new(
        coords: Array2<f64>,
        dataset_id: impl Into<String>,
        method_tag: impl Into<String>,
    ) -> Result<Self, DataError> {
        if coords.ncols() != 2 {
            return Err(DataError::ParseError {
                row: 0,
                col: coords.ncols(),
                message: format!("embedding needs 2 columns, found {}", coords.ncols()),
            });
        }
        if let Some(((row, col), _)) = coords.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonNumericCell { row, col });
        }
        Ok(Self {
            coords,
            dataset_id: dataset_id.into(),
            method_tag: method_tag.into(),
        })
    }

    /// Pairs raw coordinates with `d`, checking the row count.
    pub fn for_dataset(
        coords: Array2<f64>,
        d: &Dataset,
        method_tag: impl Into<String>,
    ) -> Result<Self, DataError> {
        if coords.nrows() != d.n_rows() {
            return Err(DataError::RowCountMismatch {
                expected: d.n_rows(),
                got: coords.nrows(),
            });
        }
        Self::new(coords, d.id(), method_tag)
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.coords[[i, 0]], self.coords[[i, 1]]]
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn method_tag(&self) -> &str {
        &self.method_tag
    }

    /// Headerless two-column CSV, one row per dataset row.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        for row in self.coords.outer_iter() {
            out.push_str(&format!("{:?},{:?}\n", row[0], row[1]));
        }
        out
    }
}

/// Loads a headerless x,y file and pairs it with `d` by row order.
pub fn load_embedding(path: &Path, d: &Dataset) -> Result<Embedding, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.display().to_string()));
    }
    let bytes = std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_embedding(&bytes, d)
}

pub fn parse_embedding(bytes: &[u8], d: &Dataset) -> Result<Embedding, DataError> {
    let coords = parse_coords(bytes)?;
    Embedding::for_dataset(coords, d, "external")
}

fn parse_coords(bytes: &[u8]) -> Result<Array2<f64>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::ParseError {
            row: r,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != 2 {
            return Err(DataError::ParseError {
                row: r,
                col: record.len().min(2),
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataError::ParseError {
                row: r,
                col: c,
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonNumericCell { row: r, col: c });
            }
            values.push(v);
        }
    }
    let n = values.len() / 2;
    Ok(Array2::from_shape_vec((n, 2), values).expect("two values per row"))
}

/// Dimension above which PCA switches from a full eigendecomposition to
/// power iteration.
const JACOBI_MAX_DIM: usize = 64;
const POWER_TOL: f64 = 1e-9;
const POWER_SEED: u64 = 0x5eed_0f42;

/// Projects the mean-centred data onto its top two principal axes.
///
/// Each axis is oriented so that its largest-magnitude loading is
/// nonnegative. When the data has rank below 2, the missing axes are
/// zero-filled and the result comes back inside
/// [`PcaError::Degenerate`] so callers can proceed with a warning.
pub fn pca_embed(d: &Dataset) -> Result<Embedding, PcaError> {
    let (n, m) = (d.n_rows(), d.n_features());
    if n < 2 || m < 2 {
        return Err(PcaError::Data(DataError::InsufficientData { n, m }));
    }
    let mean = d.rows().mean_axis(Axis(0)).expect("n >= 2");
    let centred = d.rows() - &mean;
    let cov = centred.t().dot(&centred) / (n as f64 - 1.0);

    let (values, axes) = if m <= JACOBI_MAX_DIM {
        let eig = jacobi_eigen(&cov);
        let axes: Vec<Array1<f64>> = (0..2).map(|k| eig.vectors.column(k).to_owned()).collect();
        (vec![eig.values[0], eig.values[1]], axes)
    } else {
        power_top2(&cov)
    };

    let total: f64 = (0..m).map(|j| cov[[j, j]]).sum();
    let rank_tol = 1e-12 * total.max(f64::MIN_POSITIVE);
    let mut coords = Array2::zeros((n, 2));
    let mut degenerate = false;
    for (k, axis) in axes.into_iter().enumerate() {
        if !(values[k] > rank_tol) {
            degenerate = true;
            continue;
        }
        let axis = orient(axis);
        coords.column_mut(k).assign(&centred.dot(&axis));
    }
    let emb = Embedding::for_dataset(coords, d, "pca").map_err(PcaError::Data)?;
    if degenerate {
        Err(PcaError::Degenerate(Box::new(emb)))
    } else {
        Ok(emb)
    }
}

/// PCA layout, accepting the zero-filled fallback for rank < 2 data. The flag
/// reports whether the fallback was used.
pub fn pca_or_fallback(d: &Dataset) -> Result<(Embedding, bool), DataError> {
    match pca_embed(d) {
        Ok(e) => Ok((e, false)),
        Err(PcaError::Degenerate(e)) => Ok((*e, true)),
        Err(PcaError::Data(e)) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PcaError {
    Data(DataError),
    /// Rank < 2. Carries the zero-filled embedding.
    Degenerate(Box<Embedding>),
}

impl PcaError {
    pub fn into_data_error(self) -> DataError {
        match self {
            PcaError::Data(e) => e,
            PcaError::Degenerate(_) => DataError::DegenerateData,
        }
    }
}

impl std::fmt::Display for PcaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PcaError::Data(e) => e.fmt(f),
            PcaError::Degenerate(_) => DataError::DegenerateData.fmt(f),
        }
    }
}

impl std::error::Error for PcaError {}

fn orient(mut axis: Array1<f64>) -> Array1<f64> {
    let pivot = axis
        .iter()
        .copied()
        .enumerate()
        .fold((0usize, 0.0f64), |best, (j, v)| {
            if v.abs() > best.1.abs() {
                (j, v)
            } else {
                best
            }
        });
    if pivot.1 < 0.0 {
        axis.mapv_inplace(|v| -v);
    }
    axis
}

/// Top-2 eigenpairs by power iteration with deflation.
fn power_top2(cov: &Array2<f64>) -> (Vec<f64>, Vec<Array1<f64>>) {
    let m = cov.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut values = Vec::with_capacity(2);
    let mut axes: Vec<Array1<f64>> = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut v = Array1::from_iter((0..m).map(|_| rng.random::<f64>() - 0.5));
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            for prev in &axes {
                let proj = prev.dot(&v);
                v.scaled_add(-proj, prev);
            }
            let norm = v.dot(&v).sqrt();
            if norm == 0.0 {
                break;
            }
            v /= norm;
            let w = cov.dot(&v);
            let next = v.dot(&w);
            let converged = (next - lambda).abs() <= POWER_TOL * next.abs().max(1.0);
            lambda = next;
            v = w;
            if converged {
                break;
            }
        }
        for prev in &axes {
            let proj = prev.dot(&v);
            v.scaled_add(-proj, prev);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        values.push(lambda.max(0.0));
        axes.push(v);
    }
    (values, axes)
}
