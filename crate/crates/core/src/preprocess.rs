//! Shared feature pipeline: z-score standardization, greedy correlation
//! filter, and PCA by covariance eigendecomposition.
//!
//! All three stages are fitted once on training rows and then applied
//! unchanged. The serialized [`PreprocessModel`] reproduces every transform
//! bit-exactly after a reload.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

const CONSTANT_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub column_names: Vec<String>,
    pub means: Vec<f64>,
    /// Population (divide-by-N) standard deviations.
    pub stds: Vec<f64>,
}

fn check_names(expected: &[String], found: &[String]) -> Result<()> {
    if expected.len() != found.len() {
        return Err(Error::DimensionMismatch { expected: expected.len(), found: found.len() });
    }
    for (e, f) in expected.iter().zip(found) {
        if e != f {
            return Err(Error::ColumnMismatch { expected: e.clone(), found: f.clone() });
        }
    }
    Ok(())
}

fn map_rows(x: &FeatureMatrix, names: Vec<String>, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<FeatureMatrix> {
    FeatureMatrix::new(x.rows.iter().map(|r| f(r)).collect(), names, x.row_keys.clone())
}

pub fn fit_standardizer(x: &FeatureMatrix) -> Result<Standardizer> {
    if x.n_rows() < 2 {
        return Err(Error::Empty(format!("standardizer needs at least 2 rows, got {}", x.n_rows())));
    }
    let n = x.n_rows() as f64;
    let mut means = Vec::with_capacity(x.n_cols());
    let mut stds = Vec::with_capacity(x.n_cols());
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std >= CONSTANT_STD) {
            return Err(Error::ConstantColumn(x.column_names[j].clone()));
        }
        means.push(mean);
        stds.push(std);
    }
    Ok(Standardizer { column_names: x.column_names.clone(), means, stds })
}

impl Standardizer {
    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_names(&self.column_names, &x.column_names)?;
        map_rows(x, self.column_names.clone(), |r| {
            r.iter().zip(&self.means).zip(&self.stds).map(|((v, m), s)| (v - m) / s).collect()
        })
    }

    pub fn invert(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_names(&self.column_names, &x.column_names)?;
        map_rows(x, self.column_names.clone(), |r| {
            r.iter().zip(&self.means).zip(&self.stds).map(|((v, m), s)| v * s + m).collect()
        })
    }
}

pub fn apply_standardizer(s: &Standardizer, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    s.apply(x)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFilter {
    pub input_names: Vec<String>,
    pub kept_indices: Vec<usize>,
    pub threshold: f64,
}

/// Scans columns left to right and drops a column when its absolute Pearson
/// correlation with an already kept column exceeds `threshold`.
pub fn fit_correlation_filter(x: &FeatureMatrix, threshold: f64) -> Result<CorrelationFilter> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("correlation threshold {threshold} outside (0, 1)")));
    }
    let columns: Vec<Vec<f64>> = (0..x.n_cols()).map(|j| x.column(j)).collect();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..columns.len() {
        if kept.iter().all(|&i| pearson(&columns[i], &columns[j]).abs() <= threshold) {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty("correlation filter kept no columns".into()));
    }
    Ok(CorrelationFilter { input_names: x.column_names.clone(), kept_indices: kept, threshold })
}

impl CorrelationFilter {
    pub fn kept_names(&self) -> Vec<String> {
        self.kept_indices.iter().map(|&i| self.input_names[i].clone()).collect()
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_names(&self.input_names, &x.column_names)?;
        map_rows(x, self.kept_names(), |r| self.kept_indices.iter().map(|&i| r[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub input_names: Vec<String>,
    /// `k` orthonormal directions of length `d'`, one per row.
    pub components: Vec<Vec<f64>>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Sum of all covariance eigenvalues.
    pub total_variance: f64,
    pub retained_variance_ratio: f64,
}

/// Eigendecomposition of the population covariance (centered, divided by N).
/// `k` is the smallest count whose cumulative eigenvalue share reaches
/// `variance_target`; a target of 1 keeps the numerical rank. Each component
/// is signed so that its largest-magnitude entry is positive.
pub fn fit_pca(x: &FeatureMatrix, variance_target: f64) -> Result<PcaModel> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Config(format!("variance target {variance_target} outside (0, 1]")));
    }
    let (n, d) = (x.n_rows(), x.n_cols());
    if n <= d {
        return Err(Error::DimensionMismatch { expected: d + 1, found: n });
    }
    let means: Vec<f64> = (0..d).map(|j| x.rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in &x.rows {
        for a in 0..d {
            let da = row[a] - means[a];
            for b in a..d {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariance matrix is not finite".into()));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("covariance has no variance".into()));
    }

    let k = if variance_target >= 1.0 {
        let rank_tol = values[0] * 1e-12 * d as f64;
        values.iter().filter(|&&v| v > rank_tol).count().max(1)
    } else {
        let mut cum = 0.0;
        let mut k = d;
        for (i, v) in values.iter().enumerate() {
            cum += v;
            if cum / total >= variance_target {
                k = i + 1;
                break;
            }
        }
        k
    };

    let components: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = c.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if lead < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        })
        .collect();
    let eigenvalues = values[..k].to_vec();
    let retained = eigenvalues.iter().sum::<f64>() / total;
    Ok(PcaModel {
        input_names: x.column_names.clone(),
        components,
        eigenvalues,
        total_variance: total,
        retained_variance_ratio: retained,
    })
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn output_names(&self) -> Vec<String> {
        (1..=self.k()).map(|i| format!("pc{i}")).collect()
    }

    /// `x̃ = Wᵀx` row by row.
    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_names(&self.input_names, &x.column_names)?;
        map_rows(x, self.output_names(), |r| {
            self.components.iter().map(|c| c.iter().zip(r).map(|(a, b)| a * b).sum()).collect()
        })
    }

    /// `W x̃`, the best rank-k approximation of the input rows.
    pub fn reconstruct(&self, z: &FeatureMatrix) -> Result<FeatureMatrix> {
        if z.n_cols() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), found: z.n_cols() });
        }
        let d = self.input_names.len();
        map_rows(z, self.input_names.clone(), |r| {
            (0..d).map(|j| self.components.iter().zip(r).map(|(c, v)| c[j] * v).sum()).collect()
        })
    }
}

pub fn pca_transform(m: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    m.transform(x)
}

/// The three fitted stages, serialized together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessModel {
    pub standardizer: Standardizer,
    pub filter: CorrelationFilter,
    pub pca: PcaModel,
}

impl PreprocessModel {
    pub fn fit(x: &FeatureMatrix, correlation_threshold: f64, variance_target: f64) -> Result<Self> {
        let standardizer = fit_standardizer(x)?;
        let z = standardizer.apply(x)?;
        let filter = fit_correlation_filter(&z, correlation_threshold)?;
        let pca = fit_pca(&filter.apply(&z)?, variance_target)?;
        Ok(PreprocessModel { standardizer, filter, pca })
    }

    /// Standardized and filtered features.
    pub fn filtered(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.filter.apply(&self.standardizer.apply(x)?)
    }

    /// PCA coordinates of the standardized, filtered features.
    pub fn compressed(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.pca.transform(&self.filtered(x)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format { path: "<preprocess model>".into(), message: e.to_string() })
    }

    /// Hex SHA-256 of the serialized model.
    pub fn checksum(&self) -> String {
        Sha256::digest(self.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }
}
