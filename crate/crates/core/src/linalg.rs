//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Build a matrix from row-major nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Max-abs entry; zero for empty matrices.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `max|A - Aᵀ| / max(1, max|A|)`.
pub fn relative_asymmetry(m: &Mat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / max_abs(m).max(1.0)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue of a symmetric matrix together with a unit eigenvector.
#[derive(Debug, Clone)]
pub struct Extreme {
    pub value: f64,
    pub vector: Vector,
    /// All eigenvalues, ascending.
    pub spectrum: Vec<f64>,
}

/// Eigen-decomposition of a symmetric matrix; eigenvalues ascending.
pub fn sym_eigen(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigensolve needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite matrix entry".into()));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

pub fn lambda_max(m: &Mat) -> Result<Extreme> {
    let (values, vectors) = sym_eigen(m)?;
    let last = values.len().checked_sub(1).ok_or_else(|| Error::Dimension("empty matrix".into()))?;
    Ok(Extreme {
        value: values[last],
        vector: vectors.column(last).into_owned(),
        spectrum: values,
    })
}

pub fn lambda_min(m: &Mat) -> Result<f64> {
    let (values, _) = sym_eigen(m)?;
    values
        .first()
        .copied()
        .ok_or_else(|| Error::Dimension("empty matrix".into()))
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |a, &s| a.max(s))
}

/// Checks a matrix is square of side `n`, symmetric to `1e-10` relative and
/// positive definite.
pub fn check_spd(m: &Mat, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{what}: expected {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if relative_asymmetry(m) > 1e-10 {
        return Err(Error::CertificateStructure(format!("{what} is not symmetric")));
    }
    let lo = lambda_min(&symmetrize(m))?;
    if lo <= 0.0 {
        return Err(Error::CertificateStructure(format!(
            "{what} is not positive definite (smallest eigenvalue {lo:e})"
        )));
    }
    Ok(())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in it {
        acc.add(v);
    }
    acc.value()
}
