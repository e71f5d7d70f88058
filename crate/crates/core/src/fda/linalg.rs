//! Dense symmetric eigen-decomposition and the matrix functions built on it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FtsError, Result};

/// Relative symmetry tolerance accepted by [`sym_eigen`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalue floor for [`inv_sqrt`], relative to the largest eigenvalue.
pub const INV_SQRT_FLOOR_RATIO: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
///
/// Each eigenvector is signed so that its largest-magnitude component is
/// positive (ties resolved towards the lowest index).
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub(crate) fn max_asymmetry(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

fn symmetry_scale(s: &DMatrix<f64>) -> f64 {
    s.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0)
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    let mut best_abs: f64 = -1.0;
    for (i, x) in v.iter().enumerate() {
        // strict comparison keeps the lowest index among ties
        if x.abs() > best_abs + 1e-12 * best_abs.max(1e-300) {
            best = i;
            best_abs = x.abs();
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn sym_eigen(s: &DMatrix<f64>) -> Result<SymEigen> {
    if !s.is_square() {
        return Err(FtsError::DimensionMismatch(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(FtsError::NonFinite("sym_eigen input"));
    }
    let asym = max_asymmetry(s);
    if asym > SYMMETRY_TOL * symmetry_scale(s) {
        return Err(FtsError::NotSymmetric(asym));
    }
    Ok(sym_eigen_unchecked(s))
}

/// Eigen-decomposes the symmetric part of `s` without validation.
pub(crate) fn sym_eigen_unchecked(s: &DMatrix<f64>) -> SymEigen {
    let n = s.nrows();
    if n == 0 {
        return SymEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    // descending; stable sort keeps solver order among exact ties
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        fix_sign(&mut v);
        vectors.set_column(col, &DVector::from_vec(v));
    }
    SymEigen { values, vectors }
}

fn spectral_map(eig: &SymEigen, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for (j, &lam) in eig.values.iter().enumerate() {
        let fl = f(lam);
        for i in 0..n {
            scaled[(i, j)] *= fl;
        }
    }
    let out = &scaled * eig.vectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// `S^{-1/2}` with eigenvalues below `floor` raised to `floor`.
pub fn inv_sqrt(s: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(s)?;
    let floor = if floor > 0.0 { floor } else { f64::MIN_POSITIVE };
    Ok(spectral_map(&eig, |lam| 1.0 / lam.max(floor).sqrt()))
}

/// [`inv_sqrt`] with the floor set to `1e-10 · λ_max`.
pub fn inv_sqrt_default(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(s)?;
    let lam_max = eig.values.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let floor = INV_SQRT_FLOOR_RATIO * lam_max;
    Ok(spectral_map(&eig, |lam| 1.0 / lam.max(floor).sqrt()))
}

/// Symmetric square root of a PSD matrix; negative eigenvalues are treated as zero.
pub fn sym_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(s)?;
    Ok(spectral_map(&eig, |lam| lam.max(0.0).sqrt()))
}

/// Modified Gram–Schmidt on the columns of `m`. Columns that are numerically
/// dependent on earlier ones are dropped.
pub fn orthonormalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &cols {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-12 * scale {
            cols.push(v / norm);
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    DMatrix::from_columns(&cols)
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Least-squares solution of `X B = Y` via the normal equations. When the Gram
/// matrix is numerically singular a ridge of `1e-8 · trace` is added and the
/// returned flag is `true`.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let gram = x.transpose() * x;
    let rhs = x.transpose() * y;
    if let Some(chol) = gram.clone().cholesky() {
        let diag_min = chol.l().diagonal().iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
        let diag_max = chol.l().diagonal().iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        if diag_min > 1e-7 * diag_max {
            return (chol.solve(&rhs), false);
        }
    }
    let jitter = 1e-8 * gram.trace().max(f64::MIN_POSITIVE);
    let mut ridged = gram;
    for i in 0..ridged.nrows() {
        ridged[(i, i)] += jitter;
    }
    let sol = match ridged.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => ridged
            .pseudo_inverse(1e-12)
            .map(|pinv| pinv * &rhs)
            .unwrap_or_else(|_| DMatrix::zeros(x.ncols(), y.ncols())),
    };
    (sol, true)
}
