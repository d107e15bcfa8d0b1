//! Domain-adaptive kernel meta-regression.
//!
//! The reference set `Z` stacks the k-means centroids of the training
//! features with unlabeled target-domain features. Every sample is described
//! by its vector of similarities to `Z`: linear kernel, cosine-normalised,
//! then mapped through `exp(-gamma * (1 - k))`. A dual ridge regression on
//! the linear kernel of these second-order features maps them to prompt
//! embeddings.

pub mod ensemble;
pub mod kernel;
pub mod kmeans;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ensemble::{combine_ensemble, ensemble_registry, EnsembleCombiner, EnsembleParams, Median, WeightedAverage};
pub use kernel::{kernel_matrix, normalize_kernel, normalize_square, rbf_transform, self_similarities};
pub use kmeans::{kmeans, CentroidSet};

use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, Mat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaklConfig {
    pub gamma: f64,
    pub ridge: f64,
    /// Requested centroid count; clipped to the number of training samples.
    pub num_centroids: usize,
    pub kmeans_iters: usize,
    pub kmeans_seed: u64,
}

impl Default for DaklConfig {
    fn default() -> Self {
        DaklConfig {
            gamma: 0.001,
            ridge: 1.0,
            num_centroids: 10_000,
            kmeans_iters: 100,
            kmeans_seed: 0,
        }
    }
}

impl DaklConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.ridge > 0.0) || !self.ridge.is_finite() {
            return Err(Error::Invalid(format!("ridge must be > 0, got {}", self.ridge)));
        }
        if self.num_centroids == 0 {
            return Err(Error::Invalid("number of centroids must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaklRegressor {
    pub config: DaklConfig,
    /// Centroids followed by unlabeled target-domain rows.
    pub reference: Mat,
    pub num_centroids: usize,
    /// `k(z_j, z_j)` for every reference row.
    pub diag_norms: Vec<f64>,
    /// Dual coefficients, one row per centroid.
    pub dual_coefs: Mat,
    /// Second-order feature rows of the centroids (derived from the above).
    centroid_features: Mat,
}

/// Second-order features of `rows` against a reference set: linear kernel,
/// normalised by both self-similarities, then the RBF map.
fn second_order(rows: &Mat, reference: &Mat, diag_norms: &[f64], gamma: f64) -> Result<Mat> {
    if rows.cols != reference.cols {
        return Err(Error::Shape(format!(
            "queries have {} features, reference rows have {}",
            rows.cols, reference.cols
        )));
    }
    let own = self_similarities(rows);
    if let Some(i) = own.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Numeric(format!("query row {i} has zero norm")));
    }
    let k = kernel_matrix(rows, reference)?;
    rbf_transform(&normalize_kernel(&k, &own, diag_norms)?, gamma)
}

impl DaklRegressor {
    /// Fits the dual ridge model over `centroids` with `pool` as the
    /// unlabeled target-domain rows (may be empty).
    pub fn fit(centroids: &CentroidSet, pool: &Mat, config: &DaklConfig) -> Result<Self> {
        config.validate()?;
        let r = centroids.len();
        if r == 0 {
            return Err(Error::Invalid("no centroids to fit".into()));
        }
        let d = centroids.centers.cols;
        if pool.rows > 0 && pool.cols != d {
            return Err(Error::Shape(format!(
                "target-domain rows have {} features, training rows have {d}",
                pool.cols
            )));
        }
        let mut z = centroids.centers.data.clone();
        if pool.rows > 0 {
            z.extend_from_slice(&pool.data);
        }
        let reference = Mat::from_vec(r + pool.rows, d, z)?;

        let diag_norms = self_similarities(&reference);
        // Only the centroid rows of K_DA carry targets; the pool rows enter
        // as reference columns.
        let centroid_features = second_order(&centroids.centers, &reference, &diag_norms, config.gamma)?;
        let mut gram = centroid_features.matmul_t(&centroid_features)?;
        for i in 0..r {
            gram.data[i * r + i] += config.ridge;
        }
        let chol = cholesky(&gram).map_err(|e| {
            Error::Numeric(format!("ridge system could not be factorised: {e}"))
        })?;
        let dual_coefs = cholesky_solve(&chol, &centroids.targets)?;
        Ok(DaklRegressor {
            config: config.clone(),
            reference,
            num_centroids: r,
            diag_norms,
            dual_coefs,
            centroid_features,
        })
    }

    /// k-means on the training rows (with `config.num_centroids` clipped to
    /// `n`) followed by [`DaklRegressor::fit`].
    pub fn fit_samples(features: &Mat, targets: &Mat, pool: &Mat, config: &DaklConfig) -> Result<Self> {
        config.validate()?;
        let r = config.num_centroids.min(features.rows);
        let centroids = kmeans(features, targets, r, config.kmeans_iters, config.kmeans_seed)?;
        DaklRegressor::fit(&centroids, pool, config)
    }

    pub fn feature_dim(&self) -> usize {
        self.reference.cols
    }

    pub fn embed_dim(&self) -> usize {
        self.dual_coefs.cols
    }

    /// Second-order features of arbitrary rows against the reference set.
    pub fn second_order_features(&self, rows: &Mat) -> Result<Mat> {
        second_order(rows, &self.reference, &self.diag_norms, self.config.gamma)
    }

    pub fn predict(&self, queries: &Mat) -> Result<Mat> {
        let phi = self.second_order_features(queries)?;
        let g = phi.matmul_t(&self.centroid_features)?;
        g.matmul(&self.dual_coefs)
    }

    pub fn to_bundle(&self) -> Bundle {
        let header = DaklHeader {
            config: self.config.clone(),
            num_centroids: self.num_centroids,
            feature_dim: self.reference.cols,
            embed_dim: self.dual_coefs.cols,
            reference_rows: self.reference.rows,
        };
        let mut b = Bundle::new(DAKL_KIND, &header);
        b.push("reference", &[self.reference.rows, self.reference.cols], &self.reference.data);
        b.push("diag_norms", &[self.diag_norms.len()], &self.diag_norms);
        b.push("dual_coefs", &[self.dual_coefs.rows, self.dual_coefs.cols], &self.dual_coefs.data);
        b
    }

    pub fn from_bundle(mut b: Bundle) -> Result<Self> {
        b.expect_kind(DAKL_KIND)?;
        let h: DaklHeader = b.header()?;
        h.config.validate()?;
        let reference = Mat::from_vec(
            h.reference_rows,
            h.feature_dim,
            b.take("reference", &[h.reference_rows, h.feature_dim])?,
        )?;
        let diag_norms = b.take("diag_norms", &[h.reference_rows])?;
        if let Some(i) = diag_norms.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Data(format!("reference row {i} has non-positive self-similarity")));
        }
        let dual_coefs = Mat::from_vec(
            h.num_centroids,
            h.embed_dim,
            b.take("dual_coefs", &[h.num_centroids, h.embed_dim])?,
        )?;
        let centroids = Mat::from_vec(
            h.num_centroids,
            h.feature_dim,
            reference.data[..h.num_centroids * h.feature_dim].to_vec(),
        )?;
        let centroid_features = second_order(&centroids, &reference, &diag_norms, h.config.gamma)?;
        Ok(DaklRegressor {
            config: h.config,
            reference,
            num_centroids: h.num_centroids,
            diag_norms,
            dual_coefs,
            centroid_features,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        DaklRegressor::from_bundle(Bundle::load(path)?)
    }
}

pub const DAKL_KIND: &str = "dakl";

#[derive(Serialize, Deserialize)]
struct DaklHeader {
    config: DaklConfig,
    num_centroids: usize,
    feature_dim: usize,
    embed_dim: usize,
    reference_rows: usize,
}
