//! Sample autocovariance kernel matrices, functional hard thresholding and
//! cross-validated threshold selection.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FtsError, Result};
use crate::fda::{Curve, CurvePanel, Grid, KernelMatrix};

/// Number of log-spaced candidates in the default threshold grid.
pub const DEFAULT_GRID_SIZE: usize = 20;
/// Smallest default candidate, relative to the largest entry norm.
pub const DEFAULT_GRID_FLOOR: f64 = 1e-4;

/// Autocovariance kernel matrices at lags `0..=k_max` plus the mean curves.
#[derive(Clone, Debug)]
pub struct AutocovSet {
    grid: Grid,
    p: usize,
    mean: Vec<f64>,
    kernels: Vec<KernelMatrix>,
}

impl AutocovSet {
    /// Sample autocovariances of `panel` centred at the full-sample mean.
    pub fn compute(panel: &CurvePanel, k_max: usize) -> Result<Self> {
        if k_max + 2 > panel.n() {
            return Err(FtsError::LagOutOfRange { lag: k_max, n: panel.n() });
        }
        let xc = centered(panel);
        let kernels = (0..=k_max)
            .into_par_iter()
            .map(|k| {
                let raw = raw_cross(&xc, k, 0, panel.n() - k);
                KernelMatrix::from_parts_unchecked(panel.grid().clone(), panel.p(), panel.p(), raw / (panel.n() - k) as f64)
            })
            .collect();
        Ok(AutocovSet {
            grid: panel.grid().clone(),
            p: panel.p(),
            mean: panel.mean_row(),
            kernels,
        })
    }

    /// Assembles a set from precomputed lag `0..` kernels.
    pub fn from_kernels(mean: Vec<f64>, kernels: Vec<KernelMatrix>) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| FtsError::InvalidParameter("autocovariance set needs lag 0".into()))?;
        let grid = first.grid().clone();
        let p = first.p_rows();
        for k in &kernels {
            grid.check_same(k.grid())?;
            if k.p_rows() != p || k.p_cols() != p {
                return Err(FtsError::DimensionMismatch("autocovariance kernels must be p x p".into()));
            }
        }
        if mean.len() != p * grid.len() {
            return Err(FtsError::LengthMismatch {
                expected: p * grid.len(),
                actual: mean.len(),
            });
        }
        Ok(AutocovSet { grid, p, mean, kernels })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k_max(&self) -> usize {
        self.kernels.len() - 1
    }

    /// Lag-`k` kernel matrix for `k ≥ 0`.
    pub fn kernel(&self, k: usize) -> Result<&KernelMatrix> {
        self.kernels.get(k).ok_or(FtsError::MissingLag(k))
    }

    /// Kernel at a signed lag, using `Σ_{-k}(u,v) = Σ_k(v,u)ᵀ`.
    pub fn signed(&self, k: i64) -> Result<KernelMatrix> {
        let kernel = self.kernel(k.unsigned_abs() as usize)?;
        Ok(if k < 0 { kernel.kernel_transpose() } else { kernel.clone() })
    }

    pub fn kernels(&self) -> &[KernelMatrix] {
        &self.kernels
    }

    /// The same set restricted to lags `0..=k_max`.
    pub fn truncated(&self, k_max: usize) -> Result<Self> {
        if k_max > self.k_max() {
            return Err(FtsError::MissingLag(k_max));
        }
        Ok(AutocovSet {
            grid: self.grid.clone(),
            p: self.p,
            mean: self.mean.clone(),
            kernels: self.kernels[..=k_max].to_vec(),
        })
    }

    /// Mean curves laid out like a panel row.
    pub fn mean_row(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_curves(&self) -> Vec<Curve> {
        let big_n = self.grid.len();
        (0..self.p)
            .map(|j| Curve::new(self.grid.clone(), self.mean[j * big_n..(j + 1) * big_n].to_vec()).expect("finite mean"))
            .collect()
    }

    /// Entrywise thresholding of every lag with the plan's per-lag `ω_k`;
    /// the plan must cover every lag in the set.
    pub fn thresholded(&self, plan: &ThresholdPlan) -> Result<Self> {
        let kernels = self
            .kernels
            .iter()
            .enumerate()
            .map(|(k, s)| plan.omegas.get(k).map(|&w| threshold(s, w)).ok_or(FtsError::MissingLag(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AutocovSet {
            grid: self.grid.clone(),
            p: self.p,
            mean: self.mean.clone(),
            kernels,
        })
    }

    /// The set for the transformed series `Aᵀ Y_t`, with `A` of size `p × r`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<Self> {
        let kernels = self
            .kernels
            .iter()
            .map(|s| s.congruence(a))
            .collect::<Result<Vec<_>>>()?;
        let big_n = self.grid.len();
        let mut mean = vec![0.0; a.ncols() * big_n];
        for r in 0..a.ncols() {
            for j in 0..self.p {
                let c = a[(j, r)];
                for x in 0..big_n {
                    mean[r * big_n + x] += c * self.mean[j * big_n + x];
                }
            }
        }
        Ok(AutocovSet {
            grid: self.grid.clone(),
            p: a.ncols(),
            mean,
            kernels,
        })
    }
}

fn centered(panel: &CurvePanel) -> DMatrix<f64> {
    let mean = panel.mean_row();
    let mut xc = panel.data().clone();
    for (c, m) in mean.iter().enumerate() {
        xc.column_mut(c).add_scalar_mut(-m);
    }
    xc
}

/// `Σ_{t=t0}^{t1-1} x_t x_{t+k}ᵀ` over rows of `x`.
fn raw_cross(x: &DMatrix<f64>, k: usize, t0: usize, t1: usize) -> DMatrix<f64> {
    let cols = x.ncols();
    if t1 <= t0 {
        return DMatrix::zeros(cols, cols);
    }
    let len = t1 - t0;
    x.rows(t0, len).tr_mul(&x.rows(t0 + k, len))
}

/// Lag-`k` sample autocovariance of `panel` centred at the full-sample mean.
pub fn sample_autocov(panel: &CurvePanel, k: usize) -> Result<KernelMatrix> {
    if k + 2 > panel.n() {
        return Err(FtsError::LagOutOfRange { lag: k, n: panel.n() });
    }
    let xc = centered(panel);
    let raw = raw_cross(&xc, k, 0, panel.n() - k);
    Ok(KernelMatrix::from_parts_unchecked(
        panel.grid().clone(),
        panel.p(),
        panel.p(),
        raw / (panel.n() - k) as f64,
    ))
}

/// Keeps entry `(i, j)` if its HS norm is at least `omega`, zeroes it otherwise.
pub fn threshold(s: &KernelMatrix, omega: f64) -> KernelMatrix {
    let mut out = s.clone();
    for i in 0..s.p_rows() {
        for j in 0..s.p_cols() {
            if s.entry_hs_norm(i, j) < omega {
                out.zero_entry(i, j);
            }
        }
    }
    out
}

/// Per-lag thresholds with the cross-validation error each one attains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    pub omegas: Vec<f64>,
    pub folds: usize,
    /// Minimal CV objective per lag; `None` for fixed thresholds.
    pub cv_errors: Option<Vec<f64>>,
}

impl ThresholdPlan {
    /// Fixed thresholds, no cross-validation.
    pub fn fixed(omegas: Vec<f64>) -> Result<Self> {
        if omegas.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(FtsError::InvalidParameter("thresholds must be finite and nonnegative".into()));
        }
        Ok(ThresholdPlan {
            omegas,
            folds: 2,
            cv_errors: None,
        })
    }

    /// Chooses `ω_k` for lags `0..=k_max` of `acov` (which must be the
    /// full-sample estimate for `panel`) by `folds`-fold cross-validation.
    /// The objective is minimised exactly; see [`exact_cv_omega`].
    pub fn cross_validated(panel: &CurvePanel, acov: &AutocovSet, k_max: usize, folds: usize) -> Result<Self> {
        if k_max > acov.k_max() {
            return Err(FtsError::MissingLag(k_max));
        }
        let xc = centered(panel);
        let picks = (0..=k_max)
            .into_par_iter()
            .map(|k| {
                let full = acov.kernel(k)?;
                let raw_full = full.data() * (panel.n() - k) as f64;
                let stats = fold_statistics(&xc, panel.grid(), panel.p(), k, folds, &raw_full)?;
                Ok(stats.exact_minimizer(full.hs_norms().max()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (omegas, errors) = picks.into_iter().unzip();
        Ok(ThresholdPlan {
            omegas,
            folds,
            cv_errors: Some(errors),
        })
    }
}

/// `DEFAULT_GRID_SIZE` log-spaced values from `1e-4·M` to `M`, where `M` is the
/// largest entry HS norm of `s`. A zero matrix yields `[0]`.
pub fn default_candidate_grid(s: &KernelMatrix) -> Vec<f64> {
    let m = s.hs_norms().iter().fold(0.0_f64, |a, &v| a.max(v));
    if m <= 0.0 {
        return vec![0.0];
    }
    let lo = (DEFAULT_GRID_FLOOR * m).ln();
    let hi = m.ln();
    (0..DEFAULT_GRID_SIZE)
        .map(|i| {
            if i + 1 == DEFAULT_GRID_SIZE {
                m
            } else {
                (lo + (hi - lo) * i as f64 / (DEFAULT_GRID_SIZE - 1) as f64).exp()
            }
        })
        .collect()
}

/// Per-fold, per-entry quantities that determine the CV objective for any ω:
/// keeping an entry costs `‖Σ^(l) − Σ^(−l)‖²`, killing it costs `‖Σ^(−l)‖²`.
struct FoldStats {
    folds: usize,
    norm: Vec<f64>,
    keep: Vec<f64>,
    kill: Vec<f64>,
}

impl FoldStats {
    fn objective(&self, omega: f64) -> f64 {
        let mut total = 0.0;
        for ((n, a), b) in self.norm.iter().zip(&self.keep).zip(&self.kill) {
            total += if *n >= omega { a } else { b };
        }
        total / self.folds as f64
    }

    /// The objective only changes at the fold entry norms. Returns the
    /// midpoint of the lowest-error interval between consecutive norms and
    /// its error; ties go to the smaller threshold. Keeping everything maps to
    /// `0`, killing everything to twice the largest norm (fold or `full_max`).
    fn exact_minimizer(&self, full_max: f64) -> (f64, f64) {
        let mut order: Vec<usize> = (0..self.norm.len()).collect();
        order.sort_by(|&a, &b| self.norm[a].total_cmp(&self.norm[b]));
        let scale = self.folds as f64;
        let mut current: f64 = self.keep.iter().sum();
        let mut best = (0.0, current / scale);
        let mut i = 0;
        while i < order.len() {
            let v = self.norm[order[i]];
            while i < order.len() && self.norm[order[i]] == v {
                current += self.kill[order[i]] - self.keep[order[i]];
                i += 1;
            }
            let err = current / scale;
            if err < best.1 {
                let omega = match order.get(i) {
                    Some(&next) => 0.5 * (v + self.norm[next]),
                    None => 2.0 * v.max(full_max),
                };
                best = (omega, err);
            }
        }
        best
    }

    fn select(&self, grid: &[f64]) -> Result<f64> {
        if grid.is_empty() {
            return Err(FtsError::InvalidParameter("threshold grid is empty".into()));
        }
        if let Some(bad) = grid.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(FtsError::InvalidParameter(format!("invalid threshold candidate {bad}")));
        }
        let mut best = (f64::INFINITY, f64::INFINITY);
        for &w in grid {
            let err = self.objective(w);
            if err < best.0 || (err == best.0 && w < best.1) {
                best = (err, w);
            }
        }
        Ok(best.1)
    }
}

/// Contiguous validation blocks; the first `n mod L` blocks get one extra row.
fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut s = 0;
    for l in 0..folds {
        let len = base + usize::from(l < extra);
        out.push((s, s + len));
        s += len;
    }
    out
}

fn row_sum(x: &DMatrix<f64>, t0: usize, t1: usize) -> Vec<f64> {
    let mut acc = vec![0.0; x.ncols()];
    for t in t0..t1 {
        for (c, a) in acc.iter_mut().enumerate() {
            *a += x[(t, c)];
        }
    }
    acc
}

/// Centres a raw cross-product sum on the set mean `m` and divides by `cnt`:
/// `(raw − m·Rᵀ − L·mᵀ + cnt·m·mᵀ) / cnt`.
fn centre_raw(mut raw: DMatrix<f64>, m: &[f64], left: &[f64], right: &[f64], cnt: usize) -> DMatrix<f64> {
    let c = cnt as f64;
    let dim = raw.nrows();
    for b in 0..dim {
        for a in 0..dim {
            raw[(a, b)] += -m[a] * right[b] - left[a] * m[b] + c * m[a] * m[b];
        }
    }
    raw / c
}

fn fold_statistics(
    xc: &DMatrix<f64>,
    grid: &Grid,
    p: usize,
    k: usize,
    folds: usize,
    raw_full: &DMatrix<f64>,
) -> Result<FoldStats> {
    let n = xc.nrows();
    if folds < 2 {
        return Err(FtsError::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    if n < 2 * folds {
        return Err(FtsError::InsufficientData(format!("{n} observations cannot form {folds} folds")));
    }
    let bounds = fold_bounds(n, folds);
    if bounds.iter().any(|&(s, e)| e - s <= k) {
        return Err(FtsError::InsufficientData(format!(
            "validation blocks of size {} are too short for lag {k}",
            n / folds
        )));
    }
    let big_n = grid.len();
    let mut stats = FoldStats {
        folds,
        norm: Vec::with_capacity(folds * p * p),
        keep: Vec::with_capacity(folds * p * p),
        kill: Vec::with_capacity(folds * p * p),
    };
    let total_left = row_sum(xc, 0, n - k);
    let total_right = row_sum(xc, k, n);
    let total_all = row_sum(xc, 0, n);
    for &(s, e) in &bounds {
        // fold: pairs t in [s, e-k)
        let fold_raw = raw_cross(xc, k, s, e - k);
        let f_mean: Vec<f64> = row_sum(xc, s, e).iter().map(|v| v / (e - s) as f64).collect();
        let f_left = row_sum(xc, s, e - k);
        let f_right = row_sum(xc, s + k, e);
        let fold_cov = centre_raw(fold_raw.clone(), &f_mean, &f_left, &f_right, e - s - k);

        // complement: pairs t in [0, s-k) and [e, n-k); everything in
        // [max(0, s-k), min(e, n-k)) touches the fold
        let lo = s.saturating_sub(k);
        let hi = e.min(n - k);
        let cnt = (n - k) - (hi - lo);
        if cnt == 0 {
            return Err(FtsError::InsufficientData(format!("fold complement has no lag-{k} pairs")));
        }
        let comp_raw = raw_full - &fold_raw - raw_cross(xc, k, lo, s) - raw_cross(xc, k, e - k, hi);
        let fold_all = row_sum(xc, s, e);
        let c_mean: Vec<f64> = total_all
            .iter()
            .zip(&fold_all)
            .map(|(t, f)| (t - f) / (n - (e - s)) as f64)
            .collect();
        let band_left = row_sum(xc, lo, hi);
        let band_right = row_sum(xc, lo + k, hi + k);
        let c_left: Vec<f64> = total_left.iter().zip(&band_left).map(|(t, b)| t - b).collect();
        let c_right: Vec<f64> = total_right.iter().zip(&band_right).map(|(t, b)| t - b).collect();
        let comp_cov = centre_raw(comp_raw, &c_mean, &c_left, &c_right, cnt);

        let fold_km = KernelMatrix::from_parts_unchecked(grid.clone(), p, p, fold_cov);
        let diff = KernelMatrix::from_parts_unchecked(grid.clone(), p, p, fold_km.data() - &comp_cov);
        let comp_km = KernelMatrix::from_parts_unchecked(grid.clone(), p, p, comp_cov);
        debug_assert_eq!(fold_km.data().nrows(), p * big_n);
        for i in 0..p {
            for j in 0..p {
                stats.norm.push(fold_km.entry_hs_norm(i, j));
                stats.keep.push(diff.entry_hs_norm(i, j).powi(2));
                stats.kill.push(comp_km.entry_hs_norm(i, j).powi(2));
            }
        }
    }
    Ok(stats)
}

/// L-fold cross-validated choice of the lag-`k` threshold from `grid`.
/// Ties go to the smallest candidate.
pub fn cv_select_omega(panel: &CurvePanel, k: usize, folds: usize, grid: &[f64]) -> Result<f64> {
    if k + 2 > panel.n() {
        return Err(FtsError::LagOutOfRange { lag: k, n: panel.n() });
    }
    let xc = centered(panel);
    let raw_full = raw_cross(&xc, k, 0, panel.n() - k);
    fold_statistics(&xc, panel.grid(), panel.p(), k, folds, &raw_full)?.select(grid)
}

/// Exact minimiser of the lag-`k` CV objective over all `ω ≥ 0`, with the
/// attained objective value.
pub fn exact_cv_omega(panel: &CurvePanel, k: usize, folds: usize) -> Result<(f64, f64)> {
    if k + 2 > panel.n() {
        return Err(FtsError::LagOutOfRange { lag: k, n: panel.n() });
    }
    let xc = centered(panel);
    let raw_full = raw_cross(&xc, k, 0, panel.n() - k);
    let stats = fold_statistics(&xc, panel.grid(), panel.p(), k, folds, &raw_full)?;
    let full_max = sample_autocov(panel, k)?.hs_norms().max();
    Ok(stats.exact_minimizer(full_max))
}

/// The CV objective `(1/L) Σ_l Σ_ij ‖T_ω(Σ^(l)) − Σ^(−l)‖²` for each candidate.
pub fn cv_objective(panel: &CurvePanel, k: usize, folds: usize, grid: &[f64]) -> Result<Vec<f64>> {
    if k + 2 > panel.n() {
        return Err(FtsError::LagOutOfRange { lag: k, n: panel.n() });
    }
    let xc = centered(panel);
    let raw_full = raw_cross(&xc, k, 0, panel.n() - k);
    let stats = fold_statistics(&xc, panel.grid(), panel.p(), k, folds, &raw_full)?;
    Ok(grid.iter().map(|&w| stats.objective(w)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::{hs_norm, FourierBasis, Kernel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Independent series; series `j` is an AR(1) in a few Fourier directions
    /// scaled by `scale[j]`.
    fn ar_panel(n: usize, scale: &[f64], big_n: usize, seed: u64) -> CurvePanel {
        let g = Grid::uniform(big_n).unwrap();
        let basis = FourierBasis::new(&g, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = scale.len();
        let mut data = DMatrix::zeros(n, p * big_n);
        for (j, s) in scale.iter().enumerate() {
            let mut state = [0.0; 3];
            for t in 0..n {
                for st in state.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *st = 0.6 * *st + e;
                }
                let c = basis.combine(&state);
                for a in 0..big_n {
                    data[(t, j * big_n + a)] = s * c.values()[a];
                }
            }
        }
        CurvePanel::new(g, p, data).unwrap()
    }

    /// Definition-level autocovariance over an arbitrary index set.
    fn oracle_subset_cov(panel: &CurvePanel, idx: &[usize], k: usize) -> DMatrix<f64> {
        let dim = panel.data().ncols();
        let mut mean = vec![0.0; dim];
        for &t in idx {
            for c in 0..dim {
                mean[c] += panel.data()[(t, c)] / idx.len() as f64;
            }
        }
        let set: std::collections::HashSet<usize> = idx.iter().copied().collect();
        let pairs: Vec<usize> = idx.iter().copied().filter(|t| set.contains(&(t + k))).collect();
        let mut out = DMatrix::zeros(dim, dim);
        for &t in &pairs {
            for a in 0..dim {
                for b in 0..dim {
                    out[(a, b)] += (panel.data()[(t, a)] - mean[a]) * (panel.data()[(t + k, b)] - mean[b]);
                }
            }
        }
        out / pairs.len() as f64
    }

    fn oracle_objective(panel: &CurvePanel, k: usize, folds: usize, omega: f64) -> f64 {
        let n = panel.n();
        let g = panel.grid().clone();
        let p = panel.p();
        let mut total = 0.0;
        for (s, e) in fold_bounds(n, folds) {
            let fold: Vec<usize> = (s..e).collect();
            let comp: Vec<usize> = (0..n).filter(|t| *t < s || *t >= e).collect();
            let f = KernelMatrix::new(g.clone(), p, p, oracle_subset_cov(panel, &fold, k)).unwrap();
            let c = KernelMatrix::new(g.clone(), p, p, oracle_subset_cov(panel, &comp, k)).unwrap();
            let diff = threshold(&f, omega).data() - c.data();
            let diff = KernelMatrix::new(g.clone(), p, p, diff).unwrap();
            total += diff.hs_norms().iter().map(|v| v * v).sum::<f64>();
        }
        total / folds as f64
    }

    #[test]
    fn constant_panel_has_zero_autocov() {
        let g = Grid::uniform(4).unwrap();
        let row = [1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0];
        let data = DMatrix::from_fn(6, 8, |_, c| row[c]);
        let panel = CurvePanel::new(g, 2, data).unwrap();
        for k in 0..4 {
            assert!(sample_autocov(&panel, k).unwrap().data().amax() < 1e-14);
        }
    }

    #[test]
    fn toy_autocov_matches_hand_sum() {
        let g = Grid::uniform(2).unwrap();
        let data = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 2.0, -1.0]);
        let panel = CurvePanel::new(g, 1, data.clone()).unwrap();
        let mean = [2.0, 2.0];
        for k in 0..2 {
            let s = sample_autocov(&panel, k).unwrap();
            for u in 0..2 {
                for v in 0..2 {
                    let mut acc = 0.0;
                    for t in 0..3 - k {
                        acc += (data[(t, u)] - mean[u]) * (data[(t + k, v)] - mean[v]);
                    }
                    assert_abs_diff_eq!(s.data()[(u, v)], acc / (3 - k) as f64, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn lag_zero_variances_and_symmetry() {
        let panel = ar_panel(50, &[1.0, 2.0], 7, 1);
        let s0 = sample_autocov(&panel, 0).unwrap();
        for i in 0..2 {
            let e = s0.entry(i, i);
            assert!((0..7).all(|a| e.values()[(a, a)] >= 0.0));
        }
        assert!((s0.data() - s0.kernel_transpose().data()).amax() < 1e-10);
    }

    #[test]
    fn negative_lag_is_transpose() {
        let panel = ar_panel(40, &[1.0, 1.0], 5, 2);
        let acov = AutocovSet::compute(&panel, 2).unwrap();
        let neg = acov.signed(-2).unwrap();
        assert_eq!(neg.data(), &acov.kernel(2).unwrap().data().transpose());
        assert!(matches!(acov.kernel(3), Err(FtsError::MissingLag(3))));
    }

    #[test]
    fn lag_out_of_range() {
        let panel = ar_panel(5, &[1.0], 3, 3);
        assert!(matches!(sample_autocov(&panel, 4), Err(FtsError::LagOutOfRange { .. })));
    }

    #[test]
    fn threshold_extremes() {
        let panel = ar_panel(30, &[1.0, 0.5], 5, 4);
        let s = sample_autocov(&panel, 1).unwrap();
        assert_eq!(threshold(&s, 0.0), s);
        let big = s.hs_norms().max() * 2.0;
        assert_eq!(threshold(&s, big).data().amax(), 0.0);
    }

    #[test]
    fn threshold_kills_small_off_diagonals() {
        let g = Grid::uniform(11).unwrap();
        let entries: Vec<Vec<Kernel>> = [[0.5, 0.1], [0.1, 0.4]]
            .iter()
            .map(|row| row.iter().map(|&c| Kernel::from_fn(&g, |_, _| c)).collect())
            .collect();
        let s = KernelMatrix::from_entries(&entries).unwrap();
        let norms: Vec<f64> = entries.iter().flatten().map(hs_norm).collect();
        assert!((norms[0] - 0.5).abs() < 1e-12 && (norms[1] - 0.1).abs() < 1e-12);
        let t = threshold(&s, 0.3);
        assert_eq!(t.entry_hs_norm(0, 1), 0.0);
        assert_eq!(t.entry_hs_norm(1, 0), 0.0);
        assert_eq!(t.entry(0, 0), entries[0][0]);
        assert_eq!(t.entry(1, 1), entries[1][1]);
    }

    #[test]
    fn cv_single_candidate_and_ties() {
        let panel = ar_panel(60, &[1.0, 1.0], 5, 5);
        assert_eq!(cv_select_omega(&panel, 1, 3, &[0.0]).unwrap(), 0.0);
        let huge = 1e6;
        assert_eq!(cv_select_omega(&panel, 1, 3, &[huge, huge]).unwrap(), huge);
        // every candidate above all norms gives the same objective
        assert_eq!(cv_select_omega(&panel, 1, 3, &[2e6, huge, 3e6]).unwrap(), huge);
    }

    #[test]
    fn cv_errors() {
        let panel = ar_panel(9, &[1.0], 3, 6);
        assert!(matches!(cv_select_omega(&panel, 0, 5, &[0.0]), Err(FtsError::InsufficientData(_))));
        assert!(matches!(cv_select_omega(&panel, 2, 4, &[0.0]), Err(FtsError::InsufficientData(_))));
        assert!(cv_select_omega(&panel, 0, 1, &[0.0]).is_err());
        assert!(cv_select_omega(&panel, 0, 2, &[]).is_err());
    }

    #[test]
    fn cv_objective_matches_definition() {
        let panel = ar_panel(47, &[1.0, 0.7, 1.3], 6, 7);
        for k in [0, 1, 3] {
            let s = sample_autocov(&panel, k).unwrap();
            let grid = default_candidate_grid(&s);
            let fast = cv_objective(&panel, k, 4, &grid).unwrap();
            for (w, f) in grid.iter().zip(&fast) {
                let slow = oracle_objective(&panel, k, 4, *w);
                assert_abs_diff_eq!(*f, slow, epsilon = 1e-9 * slow.max(1.0));
            }
        }
    }

    #[test]
    fn cv_separates_diagonal_from_cross_terms() {
        let panel = ar_panel(2000, &[1.0, 1.5, 0.8], 9, 8);
        for k in [0, 1] {
            let s = sample_autocov(&panel, k).unwrap();
            let norms = s.hs_norms();
            let max_off = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| norms[(i, j)])
                .fold(0.0_f64, f64::max);
            let min_diag = (0..3).map(|i| norms[(i, i)]).fold(f64::INFINITY, f64::min);
            let grid = default_candidate_grid(&s);
            let omega = cv_select_omega(&panel, k, 5, &grid).unwrap();
            assert!(max_off < omega && omega < min_diag, "lag {k}: {max_off} < {omega} < {min_diag}");
            let objective = cv_objective(&panel, k, 5, &grid).unwrap();
            let best = objective.iter().cloned().fold(f64::INFINITY, f64::min);
            let idx = grid.iter().position(|w| *w == omega).unwrap();
            assert_eq!(objective[idx], best);
        }
    }

    #[test]
    fn exact_cv_beats_every_grid_point() {
        let panel = ar_panel(53, &[1.0, 0.7, 1.3, 0.2], 6, 11);
        for k in [0, 2] {
            let (omega, err) = exact_cv_omega(&panel, k, 4).unwrap();
            assert_abs_diff_eq!(err, oracle_objective(&panel, k, 4, omega), epsilon = 1e-9 * err.max(1.0));
            let s = sample_autocov(&panel, k).unwrap();
            let mut grid = default_candidate_grid(&s);
            grid.extend((0..200).map(|i| i as f64 * s.hs_norms().max() / 150.0));
            for w in grid {
                assert!(err <= oracle_objective(&panel, k, 4, w) * (1.0 + 1e-12), "lag {k}, omega {w}");
            }
        }
    }

    #[test]
    fn plan_uses_exact_minimiser_per_lag() {
        let panel = ar_panel(80, &[1.0, 1.5, 0.8], 7, 12);
        let acov = AutocovSet::compute(&panel, 2).unwrap();
        let plan = ThresholdPlan::cross_validated(&panel, &acov, 2, 5).unwrap();
        assert_eq!(plan.omegas.len(), 3);
        for k in 0..=2 {
            let (w, e) = exact_cv_omega(&panel, k, 5).unwrap();
            assert_abs_diff_eq!(plan.omegas[k], w, epsilon = 1e-12 * w.max(1.0));
            assert_abs_diff_eq!(plan.cv_errors.as_ref().unwrap()[k], e, epsilon = 1e-12 * e.max(1.0));
        }
        assert!(ThresholdPlan::fixed(vec![0.1, -1.0]).is_err());
        assert_eq!(ThresholdPlan::fixed(vec![0.1]).unwrap().cv_errors, None);
    }

    #[test]
    fn congruence_of_set_matches_transformed_panel() {
        let panel = ar_panel(30, &[1.0, 2.0], 5, 9);
        let a = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let acov = AutocovSet::compute(&panel, 2).unwrap().congruence(&a).unwrap();
        let direct = AutocovSet::compute(&panel.apply_matrix(&a.transpose()).unwrap(), 2).unwrap();
        for k in 0..=2 {
            assert!((acov.kernel(k).unwrap().data() - direct.kernel(k).unwrap().data()).amax() < 1e-10);
        }
        for (x, y) in acov.mean_row().iter().zip(direct.mean_row()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn threshold_is_idempotent_and_keeps_large_entries(seed in 0u64..10_000, frac in 0.0f64..1.2) {
            let panel = ar_panel(20, &[1.0, 0.3, 0.6], 4, seed);
            let s = sample_autocov(&panel, 1).unwrap();
            let omega = frac * s.hs_norms().max();
            let once = threshold(&s, omega);
            prop_assert_eq!(threshold(&once, omega), once.clone());
            for v in once.hs_norms().iter() {
                prop_assert!(*v == 0.0 || *v >= omega);
            }
        }
    }
}
