//! Bivariate kernels, matrices of kernels and their integral algebra.

use nalgebra::{DMatrix, DMatrixView};

use super::grid::{Curve, Grid};
use super::linalg::{max_asymmetry, sym_eigen_unchecked};
use crate::error::{FtsError, Result};

/// Relative tolerance for the blockwise symmetry `K(u,v) = K(v,u)ᵀ`.
pub const KERNEL_SYMMETRY_TOL: f64 = 1e-8;

/// A bivariate function `B(u, v)` sampled on `grid × grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    grid: Grid,
    values: DMatrix<f64>,
}

impl Kernel {
    pub fn new(grid: Grid, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.len() || values.ncols() != grid.len() {
            return Err(FtsError::DimensionMismatch(format!(
                "kernel values are {}x{}, grid has {} points",
                values.nrows(),
                values.ncols(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FtsError::NonFinite("kernel values"));
        }
        Ok(Kernel { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let pts = grid.points();
        let values = DMatrix::from_fn(grid.len(), grid.len(), |a, b| f(pts[a], pts[b]));
        Kernel {
            grid: grid.clone(),
            values,
        }
    }

    /// `f(u) g(v)`.
    pub fn outer(f: &Curve, g: &Curve) -> Result<Self> {
        f.grid().check_same(g.grid())?;
        let values = DMatrix::from_fn(f.grid().len(), f.grid().len(), |a, b| {
            f.values()[a] * g.values()[b]
        });
        Ok(Kernel {
            grid: f.grid().clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Kernel {
            grid: grid.clone(),
            values: DMatrix::zeros(grid.len(), grid.len()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

fn weighted_sq_norm(block: DMatrixView<'_, f64>, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for (b, wb) in w.iter().enumerate() {
        let col = block.column(b);
        let mut cs = 0.0;
        for (a, wa) in w.iter().enumerate() {
            let v = col[a];
            cs += wa * v * v;
        }
        s += wb * cs;
    }
    s
}

/// Hilbert–Schmidt norm `{∬ B(u,v)² du dv}^{1/2}`.
pub fn hs_norm(b: &Kernel) -> f64 {
    weighted_sq_norm(b.values.as_view(), b.grid.weights()).max(0.0).sqrt()
}

/// A `p_rows × p_cols` matrix whose entries are kernels on a shared grid.
///
/// Stored as one dense `(p_rows·N) × (p_cols·N)` matrix; entry `(i, j)` is
/// the block starting at `(i·N, j·N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    grid: Grid,
    p_rows: usize,
    p_cols: usize,
    data: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn new(grid: Grid, p_rows: usize, p_cols: usize, data: DMatrix<f64>) -> Result<Self> {
        let big_n = grid.len();
        if data.nrows() != p_rows * big_n || data.ncols() != p_cols * big_n {
            return Err(FtsError::DimensionMismatch(format!(
                "kernel matrix storage is {}x{}, expected {}x{}",
                data.nrows(),
                data.ncols(),
                p_rows * big_n,
                p_cols * big_n
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FtsError::NonFinite("kernel matrix"));
        }
        Ok(KernelMatrix {
            grid,
            p_rows,
            p_cols,
            data,
        })
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, p_rows: usize, p_cols: usize, data: DMatrix<f64>) -> Self {
        debug_assert_eq!(data.nrows(), p_rows * grid.len());
        debug_assert_eq!(data.ncols(), p_cols * grid.len());
        KernelMatrix {
            grid,
            p_rows,
            p_cols,
            data,
        }
    }

    pub fn zeros(grid: &Grid, p_rows: usize, p_cols: usize) -> Self {
        let big_n = grid.len();
        KernelMatrix {
            grid: grid.clone(),
            p_rows,
            p_cols,
            data: DMatrix::zeros(p_rows * big_n, p_cols * big_n),
        }
    }

    /// Builds the matrix from `entries[i][j]`.
    pub fn from_entries(entries: &[Vec<Kernel>]) -> Result<Self> {
        let first = entries
            .first()
            .and_then(|r| r.first())
            .ok_or_else(|| FtsError::InvalidParameter("empty kernel matrix".into()))?;
        let grid = first.grid.clone();
        let big_n = grid.len();
        let p_rows = entries.len();
        let p_cols = entries[0].len();
        let mut data = DMatrix::zeros(p_rows * big_n, p_cols * big_n);
        for (i, row) in entries.iter().enumerate() {
            if row.len() != p_cols {
                return Err(FtsError::DimensionMismatch("ragged kernel matrix".into()));
            }
            for (j, k) in row.iter().enumerate() {
                grid.check_same(&k.grid)?;
                data.view_mut((i * big_n, j * big_n), (big_n, big_n))
                    .copy_from(&k.values);
            }
        }
        KernelMatrix::new(grid, p_rows, p_cols, data)
    }

    /// `Σ_j f_j(u) g_j(v)ᵀ` for vector-valued curves given as stacked columns
    /// (`p·N` rows each).
    pub fn outer_sum(grid: &Grid, f: &DMatrix<f64>, g: &DMatrix<f64>, weights: &[f64]) -> Result<Self> {
        let big_n = grid.len();
        if f.nrows() % big_n != 0 || g.nrows() % big_n != 0 || f.ncols() != g.ncols() || weights.len() != f.ncols() {
            return Err(FtsError::DimensionMismatch("outer_sum operands".into()));
        }
        let mut fs = f.clone();
        for (j, w) in weights.iter().enumerate() {
            fs.column_mut(j).scale_mut(*w);
        }
        Ok(KernelMatrix::from_parts_unchecked(
            grid.clone(),
            f.nrows() / big_n,
            g.nrows() / big_n,
            fs * g.transpose(),
        ))
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn p_rows(&self) -> usize {
        self.p_rows
    }

    #[inline]
    pub fn p_cols(&self) -> usize {
        self.p_cols
    }

    #[inline]
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn entry_view(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        let big_n = self.grid.len();
        self.data.view((i * big_n, j * big_n), (big_n, big_n))
    }

    pub fn entry(&self, i: usize, j: usize) -> Kernel {
        Kernel {
            grid: self.grid.clone(),
            values: self.entry_view(i, j).into_owned(),
        }
    }

    pub(crate) fn zero_entry(&mut self, i: usize, j: usize) {
        let big_n = self.grid.len();
        self.data
            .view_mut((i * big_n, j * big_n), (big_n, big_n))
            .fill(0.0);
    }

    pub fn entry_hs_norm(&self, i: usize, j: usize) -> f64 {
        weighted_sq_norm(self.entry_view(i, j), self.grid.weights()).max(0.0).sqrt()
    }

    /// HS norms of all entries.
    pub fn hs_norms(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p_rows, self.p_cols, |i, j| self.entry_hs_norm(i, j))
    }

    /// `‖·‖_{S,F} = {Σ_ij ‖B_ij‖_S²}^{1/2}`.
    pub fn hs_frobenius_norm(&self) -> f64 {
        weighted_sq_norm(self.data.as_view(), &self.tiled_weights_rows())
            .max(0.0)
            .sqrt()
    }

    fn tiled_weights_rows(&self) -> Vec<f64> {
        // rows and columns share N, so one tiling covers both when square
        let p = self.p_rows.max(self.p_cols);
        self.grid.weights().iter().copied().cycle().take(p * self.grid.len()).collect()
    }

    /// `(u, v) ↦ B(v, u)ᵀ`, i.e. the plain transpose of the storage.
    /// For a lag-`k` autocovariance this yields lag `-k`.
    pub fn kernel_transpose(&self) -> Self {
        KernelMatrix {
            grid: self.grid.clone(),
            p_rows: self.p_cols,
            p_cols: self.p_rows,
            data: self.data.transpose(),
        }
    }

    /// Largest deviation from `K(u,v) = K(v,u)ᵀ`.
    pub fn max_blockwise_asymmetry(&self) -> f64 {
        if self.p_rows != self.p_cols {
            return f64::INFINITY;
        }
        max_asymmetry(&self.data)
    }

    pub fn add(&self, other: &KernelMatrix) -> Result<Self> {
        self.check_conform(other)?;
        Ok(KernelMatrix {
            grid: self.grid.clone(),
            p_rows: self.p_rows,
            p_cols: self.p_cols,
            data: &self.data + &other.data,
        })
    }

    pub(crate) fn add_assign(&mut self, other: &KernelMatrix) {
        self.data += &other.data;
    }

    pub fn scale(&self, c: f64) -> Self {
        KernelMatrix {
            grid: self.grid.clone(),
            p_rows: self.p_rows,
            p_cols: self.p_cols,
            data: &self.data * c,
        }
    }

    fn check_conform(&self, other: &KernelMatrix) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.p_rows != other.p_rows || self.p_cols != other.p_cols {
            return Err(FtsError::DimensionMismatch(format!(
                "{}x{} vs {}x{} kernel matrices",
                self.p_rows, self.p_cols, other.p_rows, other.p_cols
            )));
        }
        Ok(())
    }

    /// `Aᵀ K(u,v) B` for real matrices `A` (`p_rows × r`) and `B` (`p_cols × s`).
    pub fn congruence2(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != self.p_rows || b.nrows() != self.p_cols {
            return Err(FtsError::DimensionMismatch(format!(
                "congruence with {}x{} and {}x{} on a {}x{} kernel matrix",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                self.p_rows,
                self.p_cols
            )));
        }
        let big_n = self.grid.len();
        // right factor: columns of K (B ⊗ I)
        let right = block_column_combine(&self.data, b, big_n);
        // left factor via transpose: (A ⊗ I)ᵀ X = ((Xᵀ)(A ⊗ I))ᵀ
        let left_t = block_column_combine(&right.transpose(), a, big_n);
        Ok(KernelMatrix {
            grid: self.grid.clone(),
            p_rows: a.ncols(),
            p_cols: b.ncols(),
            data: left_t.transpose(),
        })
    }

    /// `Aᵀ K(u,v) A`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<Self> {
        self.congruence2(a, a)
    }

    /// Restriction to the given row and column index sets.
    pub fn sub_matrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let big_n = self.grid.len();
        let mut data = DMatrix::zeros(rows.len() * big_n, cols.len() * big_n);
        for (ni, &i) in rows.iter().enumerate() {
            for (nj, &j) in cols.iter().enumerate() {
                data.view_mut((ni * big_n, nj * big_n), (big_n, big_n))
                    .copy_from(&self.entry_view(i, j));
            }
        }
        KernelMatrix {
            grid: self.grid.clone(),
            p_rows: rows.len(),
            p_cols: cols.len(),
            data,
        }
    }
}

/// `X (C ⊗ I_N)` where `X` has `p·N` columns and `C` is `p × r`.
fn block_column_combine(x: &DMatrix<f64>, c: &DMatrix<f64>, big_n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), c.ncols() * big_n);
    for b in 0..c.ncols() {
        let mut dst = out.columns_mut(b * big_n, big_n);
        for j in 0..c.nrows() {
            let coef = c[(j, b)];
            if coef != 0.0 {
                dst.zip_apply(&x.columns(j * big_n, big_n), |d, s| *d += coef * s);
            }
        }
    }
    out
}

/// The two integral products of kernel matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductMode {
    /// `∬ M1(u,v) M2(u,v)ᵀ du dv`, a real matrix.
    PointwiseTransposeProduct,
    /// `(u,v) ↦ ∫ M1(u,w) M2(v,w)ᵀ dw`, a kernel matrix.
    WContraction,
}

#[derive(Clone, Debug)]
pub enum KernelProduct {
    Matrix(DMatrix<f64>),
    Kernels(KernelMatrix),
}

pub fn kernel_matmul(m1: &KernelMatrix, m2: &KernelMatrix, mode: ProductMode) -> Result<KernelProduct> {
    Ok(match mode {
        ProductMode::PointwiseTransposeProduct => KernelProduct::Matrix(integrated_outer(m1, m2)?),
        ProductMode::WContraction => KernelProduct::Kernels(w_contraction(m1, m2)?),
    })
}

fn check_inner_dims(m1: &KernelMatrix, m2: &KernelMatrix) -> Result<()> {
    m1.grid.check_same(&m2.grid)?;
    if m1.p_cols != m2.p_cols {
        return Err(FtsError::DimensionMismatch(format!(
            "kernel matrices with {} and {} columns cannot be multiplied",
            m1.p_cols, m2.p_cols
        )));
    }
    Ok(())
}

/// `∬ M1(u,v) M2(u,v)ᵀ du dv`.
pub fn integrated_outer(m1: &KernelMatrix, m2: &KernelMatrix) -> Result<DMatrix<f64>> {
    check_inner_dims(m1, m2)?;
    let big_n = m1.grid.len();
    let w = m1.grid.weights();
    let row_len = big_n * m1.p_cols * big_n;
    // flatten each block row; weights applied to the left operand only
    let flatten = |m: &KernelMatrix, weighted: bool| {
        let mut f = DMatrix::zeros(m.p_rows, row_len);
        for i in 0..m.p_rows {
            let mut idx = 0;
            for c in 0..m.p_cols * big_n {
                let wc = w[c % big_n];
                for a in 0..big_n {
                    let v = m.data[(i * big_n + a, c)];
                    f[(i, idx)] = if weighted { v * w[a] * wc } else { v };
                    idx += 1;
                }
            }
        }
        f
    };
    let f1 = flatten(m1, true);
    let f2 = flatten(m2, false);
    Ok(f1 * f2.transpose())
}

/// `(u,v) ↦ ∫ M1(u,w) M2(v,w)ᵀ dw`.
pub fn w_contraction(m1: &KernelMatrix, m2: &KernelMatrix) -> Result<KernelMatrix> {
    check_inner_dims(m1, m2)?;
    let big_n = m1.grid.len();
    let w = m1.grid.weights();
    let mut scaled = m1.data.clone();
    for c in 0..scaled.ncols() {
        scaled.column_mut(c).scale_mut(w[c % big_n]);
    }
    Ok(KernelMatrix {
        grid: m1.grid.clone(),
        p_rows: m1.p_rows,
        p_cols: m2.p_rows,
        data: scaled * m2.data.transpose(),
    })
}

/// Spectral decomposition of a self-adjoint kernel-matrix operator
/// `(Kf)(u) = ∫ K(u,v) f(v) dv` on vector-valued curves.
#[derive(Clone, Debug)]
pub struct KernelEigen {
    grid: Grid,
    p: usize,
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Column `j` stacks the `p` component curves of the `j`-th eigenfunction.
    pub functions: DMatrix<f64>,
}

impl KernelEigen {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn function(&self, j: usize) -> Vec<Curve> {
        let big_n = self.grid.len();
        (0..self.p)
            .map(|c| {
                let vals: Vec<f64> = (0..big_n).map(|a| self.functions[(c * big_n + a, j)]).collect();
                Curve::new(self.grid.clone(), vals).expect("finite eigenfunction")
            })
            .collect()
    }

    /// The leading `r` eigenfunctions as stacked columns.
    pub fn leading(&self, r: usize) -> DMatrix<f64> {
        self.functions.columns(0, r.min(self.functions.ncols())).into_owned()
    }
}

pub fn kernel_sym_eigen(k: &KernelMatrix) -> Result<KernelEigen> {
    if k.p_rows != k.p_cols {
        return Err(FtsError::DimensionMismatch("kernel operator must be square".into()));
    }
    let scale = k.data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let asym = k.max_blockwise_asymmetry();
    if asym > KERNEL_SYMMETRY_TOL * scale.max(1.0) {
        return Err(FtsError::NotSymmetric(asym));
    }
    let big_n = k.grid.len();
    let sqrt_w: Vec<f64> = k.grid.weights().iter().map(|w| w.sqrt()).collect();
    let dim = k.p_rows * big_n;
    // D^{1/2} K D^{1/2} keeps the discrete operator symmetric
    let mut a = k.data.clone();
    for c in 0..dim {
        let sc = sqrt_w[c % big_n];
        for r in 0..dim {
            a[(r, c)] *= sc * sqrt_w[r % big_n];
        }
    }
    let eig = sym_eigen_unchecked(&a);
    let mut functions = eig.vectors;
    for r in 0..dim {
        let inv = 1.0 / sqrt_w[r % big_n];
        for c in 0..dim {
            functions[(r, c)] *= inv;
        }
    }
    Ok(KernelEigen {
        grid: k.grid.clone(),
        p: k.p_rows,
        values: eig.values,
        functions,
    })
}

/// Gram matrix `⟨b_j, b_k⟩` of vector-valued curves stored as stacked columns.
pub fn stacked_gram(grid: &Grid, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let big_n = grid.len();
    let w = grid.weights();
    let mut aw = a.clone();
    for r in 0..aw.nrows() {
        let wr = w[r % big_n];
        for c in 0..aw.ncols() {
            aw[(r, c)] *= wr;
        }
    }
    aw.transpose() * b
}
