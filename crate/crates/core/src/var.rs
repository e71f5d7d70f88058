//! Vector autoregressions for score series: least squares with intercept,
//! AIC order selection and iterated point prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FtsError, Result};
use crate::fda::linalg::least_squares;

pub const DEFAULT_MAX_ORDER: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub dim: usize,
    pub order: usize,
    pub intercept: DVector<f64>,
    /// `coefficients[i]` multiplies the observation `i + 1` steps back.
    pub coefficients: Vec<DMatrix<f64>>,
    /// MLE residual covariance.
    pub innovation_cov: DMatrix<f64>,
    pub aic: f64,
    /// Whether a ridge was needed for a singular regressor Gram matrix.
    pub ridged: bool,
}

/// Largest order that keeps the regression overdetermined.
pub fn feasible_max_order(n: usize, r: usize, max_order: usize) -> usize {
    (1..=max_order)
        .take_while(|&l| n > l && n - l >= r * l + 1 + r)
        .last()
        .unwrap_or(0)
}

fn lagged_design(scores: &DMatrix<f64>, order: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, r) = scores.shape();
    let n_eff = n - order;
    let mut x = DMatrix::zeros(n_eff, 1 + r * order);
    for t in 0..n_eff {
        x[(t, 0)] = 1.0;
        for lag in 1..=order {
            let src = scores.row(order + t - lag);
            x.view_mut((t, 1 + (lag - 1) * r), (1, r)).copy_from(&src);
        }
    }
    let y = scores.rows(order, n_eff).into_owned();
    (x, y)
}

fn log_det_psd(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// OLS fit of a VAR of the given order on rows `order..n`.
pub fn fit_var_order(scores: &DMatrix<f64>, order: usize) -> Result<VarModel> {
    let (n, r) = scores.shape();
    if order == 0 || n <= order + 1 || r == 0 {
        return Err(FtsError::InsufficientData(format!(
            "VAR({order}) on {n} observations of dimension {r}"
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(FtsError::NonFinite("score series"));
    }
    let (x, y) = lagged_design(scores, order);
    let (beta, ridged) = least_squares(&x, &y);
    if ridged {
        log::warn!("singular VAR({order}) design, ridge jitter applied");
    }
    let resid = &y - &x * &beta;
    let n_eff = (n - order) as f64;
    let innovation_cov = resid.transpose() * &resid / n_eff;
    let innovation_cov = (&innovation_cov + innovation_cov.transpose()) * 0.5;
    let aic = n_eff * log_det_psd(&innovation_cov) + 2.0 * ((r * r * order + r) as f64);
    let intercept = beta.row(0).transpose();
    let coefficients = (0..order)
        .map(|lag| beta.rows(1 + lag * r, r).transpose())
        .collect();
    Ok(VarModel {
        dim: r,
        order,
        intercept,
        coefficients,
        innovation_cov,
        aic,
        ridged,
    })
}

/// Minimal-AIC VAR over orders `1..=max_order`, ties to the smaller order.
/// Orders are compared on the common rows `max_order..n` so the choice is
/// invariant to rescaling the series; the chosen order is then refitted on
/// all of its rows and carries the comparison AIC. The order range is capped
/// so each fit stays overdetermined, falling back to order 1.
pub fn fit_var(scores: &DMatrix<f64>, max_order: usize) -> Result<VarModel> {
    if max_order == 0 {
        return Err(FtsError::InvalidParameter("max_order must be at least 1".into()));
    }
    let (n, r) = scores.shape();
    let cap = feasible_max_order(n, r, max_order).max(1);
    if cap == 1 {
        return fit_var_order(scores, 1);
    }
    let mut best_order = 1;
    let mut best_aic = f64::INFINITY;
    for order in 1..=cap {
        let window = scores.rows(cap - order, n - cap + order).into_owned();
        let aic = fit_var_order(&window, order)?.aic;
        if aic < best_aic {
            best_aic = aic;
            best_order = order;
        }
    }
    let mut model = fit_var_order(scores, best_order)?;
    model.aic = best_aic;
    Ok(model)
}

/// One-step conditional mean given the most recent `order` rows of `history`.
fn step(model: &VarModel, history: &[DVector<f64>]) -> DVector<f64> {
    let mut next = model.intercept.clone();
    for (lag, coef) in model.coefficients.iter().enumerate() {
        next += coef * &history[history.len() - 1 - lag];
    }
    next
}

/// Iterated `h`-step prediction with innovations set to zero. `history` holds
/// observations in rows, most recent last.
pub fn predict_var_path(model: &VarModel, history: &DMatrix<f64>, h: usize) -> Result<Vec<DVector<f64>>> {
    if h == 0 {
        return Err(FtsError::InvalidParameter("horizon must be at least 1".into()));
    }
    if history.ncols() != model.dim {
        return Err(FtsError::DimensionMismatch(format!(
            "history has {} columns, model dimension is {}",
            history.ncols(),
            model.dim
        )));
    }
    if history.nrows() < model.order {
        return Err(FtsError::InsufficientData(format!(
            "VAR({}) prediction needs {} rows of history, got {}",
            model.order,
            model.order,
            history.nrows()
        )));
    }
    let start = history.nrows() - model.order;
    let mut buf: Vec<DVector<f64>> = (start..history.nrows())
        .map(|t| history.row(t).transpose())
        .collect();
    let mut path = Vec::with_capacity(h);
    for _ in 0..h {
        let next = step(model, &buf);
        buf.push(next.clone());
        path.push(next);
    }
    Ok(path)
}

pub fn predict_var(model: &VarModel, history: &DMatrix<f64>, h: usize) -> Result<DVector<f64>> {
    Ok(predict_var_path(model, history, h)?.pop().expect("h >= 1"))
}
