use nalgebra::DMatrix;

use super::grid::{Curve, Grid};
use crate::error::{FtsError, Result};

/// An `n × p` panel of curves on a shared grid.
///
/// Row `t` of the backing matrix holds the `p` curves observed at time `t`
/// laid end to end: columns `j*N .. (j+1)*N` are series `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePanel {
    grid: Grid,
    p: usize,
    data: DMatrix<f64>,
}

impl CurvePanel {
    pub fn new(grid: Grid, p: usize, data: DMatrix<f64>) -> Result<Self> {
        if p == 0 {
            return Err(FtsError::InvalidParameter("panel needs at least one series".into()));
        }
        if data.ncols() != p * grid.len() {
            return Err(FtsError::DimensionMismatch(format!(
                "panel data has {} columns, expected p*N = {}",
                data.ncols(),
                p * grid.len()
            )));
        }
        if data.nrows() < 2 {
            return Err(FtsError::InsufficientData(format!(
                "panel needs n >= 2 observations, got {}",
                data.nrows()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FtsError::NonFinite("panel values"));
        }
        Ok(CurvePanel { grid, p, data })
    }

    /// Builds a panel from `curves[t][j]`.
    pub fn from_curves(curves: &[Vec<Curve>]) -> Result<Self> {
        let first = curves
            .first()
            .and_then(|row| row.first())
            .ok_or_else(|| FtsError::InsufficientData("empty curve list".into()))?;
        let grid = first.grid().clone();
        let p = curves[0].len();
        let big_n = grid.len();
        let mut data = DMatrix::zeros(curves.len(), p * big_n);
        for (t, row) in curves.iter().enumerate() {
            if row.len() != p {
                return Err(FtsError::DimensionMismatch(format!(
                    "row {t} has {} curves, expected {p}",
                    row.len()
                )));
            }
            for (j, c) in row.iter().enumerate() {
                grid.check_same(c.grid())?;
                for (a, &v) in c.values().iter().enumerate() {
                    data[(t, j * big_n + a)] = v;
                }
            }
        }
        CurvePanel::new(grid, p, data)
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of time points.
    #[inline]
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Number of series.
    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// Grid size.
    #[inline]
    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    #[inline]
    pub fn value(&self, t: usize, j: usize, a: usize) -> f64 {
        self.data[(t, j * self.grid.len() + a)]
    }

    pub fn curve_values(&self, t: usize, j: usize) -> Vec<f64> {
        let big_n = self.grid.len();
        (0..big_n).map(|a| self.data[(t, j * big_n + a)]).collect()
    }

    pub fn curve(&self, t: usize, j: usize) -> Curve {
        Curve::new(self.grid.clone(), self.curve_values(t, j)).expect("panel values are finite")
    }

    /// The first `len` observations.
    pub fn head(&self, len: usize) -> Result<Self> {
        if len > self.n() {
            return Err(FtsError::InsufficientData(format!(
                "requested {len} rows from a panel of {}",
                self.n()
            )));
        }
        CurvePanel::new(self.grid.clone(), self.p, self.data.rows(0, len).into_owned())
    }

    /// Panel restricted to the given series, in the given order.
    pub fn select_series(&self, series: &[usize]) -> Result<Self> {
        let big_n = self.grid.len();
        if let Some(&bad) = series.iter().find(|&&j| j >= self.p) {
            return Err(FtsError::DimensionMismatch(format!(
                "series index {bad} out of range for p = {}",
                self.p
            )));
        }
        let mut data = DMatrix::zeros(self.n(), series.len() * big_n);
        for (new_j, &j) in series.iter().enumerate() {
            data.columns_mut(new_j * big_n, big_n)
                .copy_from(&self.data.columns(j * big_n, big_n));
        }
        CurvePanel::new(self.grid.clone(), series.len(), data)
    }

    /// Applies the `q × p` matrix `g` to every observation: `Y'_t(u) = G Y_t(u)`.
    pub fn apply_matrix(&self, g: &DMatrix<f64>) -> Result<Self> {
        if g.ncols() != self.p {
            return Err(FtsError::DimensionMismatch(format!(
                "matrix with {} columns applied to panel with p = {}",
                g.ncols(),
                self.p
            )));
        }
        let big_n = self.grid.len();
        let q = g.nrows();
        let mut data = DMatrix::zeros(self.n(), q * big_n);
        for i in 0..q {
            for j in 0..self.p {
                let c = g[(i, j)];
                if c != 0.0 {
                    let src = self.data.columns(j * big_n, big_n);
                    let mut dst = data.columns_mut(i * big_n, big_n);
                    dst.zip_apply(&src, |d, s| *d += c * s);
                }
            }
        }
        CurvePanel::new(self.grid.clone(), q, data)
    }

    /// Mean curve of every series, laid out like a panel row.
    pub fn mean_row(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.data.row_iter().fold(vec![0.0; self.data.ncols()], |mut acc, row| {
            acc.iter_mut().zip(row.iter()).for_each(|(a, v)| *a += v);
            acc
        })
        .into_iter()
        .map(|s| s / n)
        .collect()
    }

    /// Stacks the rows of `other` under `self`.
    pub fn append(&self, other: &CurvePanel) -> Result<Self> {
        self.grid.check_same(other.grid())?;
        if self.p != other.p {
            return Err(FtsError::DimensionMismatch("series count differs".into()));
        }
        let mut data = DMatrix::zeros(self.n() + other.n(), self.data.ncols());
        data.rows_mut(0, self.n()).copy_from(&self.data);
        data.rows_mut(self.n(), other.n()).copy_from(&other.data);
        CurvePanel::new(self.grid.clone(), self.p, data)
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }
}

/// `G y(u)` for one observation laid out as a panel row of `g.ncols()` curves.
pub fn apply_matrix_to_row(g: &DMatrix<f64>, row: &[f64], n_points: usize) -> Result<Vec<f64>> {
    if row.len() != g.ncols() * n_points {
        return Err(FtsError::LengthMismatch {
            expected: g.ncols() * n_points,
            actual: row.len(),
        });
    }
    let src = DMatrix::from_column_slice(n_points, g.ncols(), row);
    let out = src * g.transpose();
    Ok(out.as_slice().to_vec())
}
