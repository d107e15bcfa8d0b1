use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};

/// Linear kernel between the rows of `a` and `b`: `A Bᵀ`.
pub fn kernel_matrix(a: &Mat, b: &Mat) -> Result<Mat> {
    a.matmul_t(b)
}

/// Self-similarities `k(z_i, z_i)` of every row.
pub fn self_similarities(a: &Mat) -> Vec<f64> {
    (0..a.rows).map(|i| dot(a.row(i), a.row(i))).collect()
}

fn check_positive(values: &[f64], side: &str) -> Result<()> {
    match values.iter().position(|v| !(*v > 0.0)) {
        Some(i) => Err(Error::Numeric(format!(
            "{side} row {i} has self-similarity {}; zero-norm rows cannot be normalised",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// `K̂_ij = K_ij / sqrt(row_self_i * col_self_j)`.
pub fn normalize_kernel(k: &Mat, row_self: &[f64], col_self: &[f64]) -> Result<Mat> {
    if row_self.len() != k.rows || col_self.len() != k.cols {
        return Err(Error::Shape(format!(
            "{}x{} kernel with {} row and {} column self-similarities",
            k.rows,
            k.cols,
            row_self.len(),
            col_self.len()
        )));
    }
    check_positive(row_self, "kernel")?;
    check_positive(col_self, "reference")?;
    let col_sqrt: Vec<f64> = col_self.iter().map(|v| v.sqrt()).collect();
    let mut out = k.clone();
    for i in 0..k.rows {
        let ri = row_self[i].sqrt();
        for (v, cj) in out.row_mut(i).iter_mut().zip(&col_sqrt) {
            *v /= ri * cj;
        }
    }
    Ok(out)
}

/// Normalises a square kernel by its own diagonal.
pub fn normalize_square(k: &Mat) -> Result<Mat> {
    if k.rows != k.cols {
        return Err(Error::Shape(format!(
            "expected a square kernel, got {}x{}",
            k.rows, k.cols
        )));
    }
    let diag: Vec<f64> = (0..k.rows).map(|i| k.get(i, i)).collect();
    let mut out = normalize_kernel(k, &diag, &diag)?;
    for i in 0..k.rows {
        out.set(i, i, 1.0);
    }
    Ok(out)
}

/// Elementwise `exp(-gamma * (1 - K̂_ij))`.
pub fn rbf_transform(k_hat: &Mat, gamma: f64) -> Result<Mat> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Invalid(format!("gamma must be > 0, got {gamma}")));
    }
    let mut out = k_hat.clone();
    for v in out.data.iter_mut() {
        *v = (-gamma * (1.0 - *v)).exp();
    }
    Ok(out)
}
