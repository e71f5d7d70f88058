//! Variational multivariate FPCA of a transformed group: eigenanalysis of the
//! nonzero-lag operator, dimension selection, scores and reconstruction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autocov::AutocovSet;
use crate::error::{FtsError, Result};
use crate::fda::{kernel_sym_eigen, stacked_gram, w_contraction, Curve, CurvePanel, Grid, KernelMatrix};
use crate::segmentation::ratio_argmax;

/// Eigenvalues at or below this fraction of the leading one are treated as
/// numerical zeros when selecting the dimension.
pub const NUMERICAL_RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimSelectConfig {
    pub c_r: f64,
    pub delta_tilde: f64,
}

impl Default for DimSelectConfig {
    fn default() -> Self {
        DimSelectConfig { c_r: 0.75, delta_tilde: 0.0 }
    }
}

impl DimSelectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_r > 0.0 && self.c_r <= 1.0) {
            return Err(FtsError::InvalidParameter(format!("c_r must lie in (0, 1], got {}", self.c_r)));
        }
        if !(self.delta_tilde >= 0.0) {
            return Err(FtsError::InvalidParameter("delta_tilde must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Fitted per-group expansion `Z_t ≈ Z̄ + Σ_j ζ_tj ψ_j`.
#[derive(Clone, Debug)]
pub struct GroupFpcaModel {
    pub group_indices: Vec<usize>,
    grid: Grid,
    /// Mean curves stacked component after component.
    pub mean: Vec<f64>,
    /// All eigenvalues of `K̂`, descending.
    pub eigenvalues: Vec<f64>,
    /// Leading `r̂` eigenfunctions as stacked columns.
    pub eigenfunctions: DMatrix<f64>,
    pub r_hat: usize,
    /// `n × r̂` in-sample scores.
    pub scores: DMatrix<f64>,
}

impl GroupFpcaModel {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.mean.len() / self.grid.len()
    }

    /// `Z̄ + Σ_j ζ_j ψ̂_j`, stacked.
    pub fn reconstruct_stacked(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() != self.r_hat {
            return Err(FtsError::LengthMismatch {
                expected: self.r_hat,
                actual: scores.len(),
            });
        }
        let mut out = self.mean.clone();
        for (j, z) in scores.iter().enumerate() {
            for (o, psi) in out.iter_mut().zip(self.eigenfunctions.column(j).iter()) {
                *o += z * psi;
            }
        }
        Ok(out)
    }

    /// Scores of arbitrary observations laid out like panel rows.
    pub fn project(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centred = rows.clone();
        for (c, m) in self.mean.iter().enumerate() {
            centred.column_mut(c).add_scalar_mut(-m);
        }
        project_centred(&self.grid, &centred, &self.eigenfunctions)
    }
}

fn project_centred(grid: &Grid, centred: &DMatrix<f64>, basis: &DMatrix<f64>) -> DMatrix<f64> {
    let big_n = grid.len();
    let w = grid.weights();
    let mut weighted = basis.clone();
    for r in 0..weighted.nrows() {
        let wr = w[r % big_n];
        weighted.row_mut(r).scale_mut(wr);
    }
    centred * weighted
}

/// `Z̄ + Σ_j ζ_j ψ̂_j` as one curve per component.
pub fn reconstruct(model: &GroupFpcaModel, scores: &[f64]) -> Result<Vec<Curve>> {
    let stacked = model.reconstruct_stacked(scores)?;
    let big_n = model.grid.len();
    stacked
        .chunks(big_n)
        .map(|c| Curve::new(model.grid.clone(), c.to_vec()))
        .collect()
}

/// `M̂_k = A_lᵀ Σ̂_k A_l`.
pub fn group_m(acov_y: &AutocovSet, a_l: &DMatrix<f64>, k: usize) -> Result<KernelMatrix> {
    acov_y.kernel(k)?.congruence(a_l)
}

/// `K̂ = Σ_{k=1}^{k0} ∫ M̂_k(u,w) M̂_k(v,w)ᵀ dw`, with `m_hats[k-1] = M̂_k`.
pub fn build_k(m_hats: &[KernelMatrix], k0: usize) -> Result<KernelMatrix> {
    if k0 == 0 {
        return Err(FtsError::InvalidParameter("k0 must be at least 1".into()));
    }
    if m_hats.len() < k0 {
        return Err(FtsError::MissingLag(m_hats.len() + 1));
    }
    let mut k = w_contraction(&m_hats[0], &m_hats[0])?;
    for m in &m_hats[1..k0] {
        k.add_assign(&w_contraction(m, m)?);
    }
    let sym = (k.data() + k.data().transpose()) * 0.5;
    KernelMatrix::new(k.grid().clone(), k.p_rows(), k.p_cols(), sym)
}

/// Ratio estimator of the number of retained components, at least 1.
pub fn select_r(theta_desc: &[f64], cfg: &DimSelectConfig, n_eff: usize) -> usize {
    if theta_desc.len() < 2 {
        return 1;
    }
    let cap = ((cfg.c_r * n_eff as f64).floor() as usize).min(theta_desc.len() - 1);
    ratio_argmax(theta_desc, cap, cfg.delta_tilde).max(1)
}

/// Eigenvalues above `NUMERICAL_RANK_TOL · θ_1`.
fn numerical_support(theta: &[f64]) -> &[f64] {
    let top = theta.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return &theta[..theta.len().min(1)];
    }
    let len = theta.iter().take_while(|&&v| v > NUMERICAL_RANK_TOL * top).count();
    &theta[..len.max(1)]
}

/// Fits the expansion for the group `z_panel_l = A_lᵀ Ỹ`, given the
/// autocovariances of `Ỹ`.
pub fn fit_group(
    z_panel_l: &CurvePanel,
    acov_y: &AutocovSet,
    a_l: &DMatrix<f64>,
    k0: usize,
    cfg: &DimSelectConfig,
) -> Result<GroupFpcaModel> {
    cfg.validate()?;
    if z_panel_l.p() != a_l.ncols() || acov_y.p() != a_l.nrows() {
        return Err(FtsError::DimensionMismatch(format!(
            "group panel has {} series, loading matrix is {}x{}, autocovariances are for p = {}",
            z_panel_l.p(),
            a_l.nrows(),
            a_l.ncols(),
            acov_y.p()
        )));
    }
    if z_panel_l.n() <= k0 + 1 {
        return Err(FtsError::InsufficientData(format!("group fit needs n > {}, got {}", k0 + 1, z_panel_l.n())));
    }
    let m_hats = (1..=k0).map(|k| group_m(acov_y, a_l, k)).collect::<Result<Vec<_>>>()?;
    let k_hat = build_k(&m_hats, k0)?;
    fit_from_operator(z_panel_l, &k_hat, k0, cfg)
}

/// The eigen-solve, dimension choice and score extraction given `K̂`.
pub(crate) fn fit_from_operator(
    z_panel_l: &CurvePanel,
    k_hat: &KernelMatrix,
    k0: usize,
    cfg: &DimSelectConfig,
) -> Result<GroupFpcaModel> {
    let eig = kernel_sym_eigen(k_hat)?;
    let n_eff = z_panel_l.n() - k0;
    let r_hat = select_r(numerical_support(&eig.values), cfg, n_eff).min(eig.values.len());
    let eigenfunctions = eig.leading(r_hat);
    let mean = z_panel_l.mean_row();
    let mut centred = z_panel_l.data().clone();
    for (c, m) in mean.iter().enumerate() {
        centred.column_mut(c).add_scalar_mut(-m);
    }
    let scores = project_centred(z_panel_l.grid(), &centred, &eigenfunctions);
    Ok(GroupFpcaModel {
        group_indices: (0..z_panel_l.p()).collect(),
        grid: z_panel_l.grid().clone(),
        mean,
        eigenvalues: eig.values,
        eigenfunctions,
        r_hat,
        scores,
    })
}

/// Tolerance on the Gram matrix of a supposedly orthonormal function basis.
pub const FUNCTIONAL_ORTHONORMAL_TOL: f64 = 1e-6;

/// `D̃ = {1 − Σ_jk ⟨b_1j, b_2k⟩² / max(r̃_1, r̃_2)}^{1/2}` for orthonormal sets of
/// vector-valued functions given as stacked columns.
pub fn subspace_discrepancy_functional(grid: &Grid, b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<f64> {
    if b1.nrows() != b2.nrows() || b1.nrows() % grid.len() != 0 {
        return Err(FtsError::DimensionMismatch("bases must share the stacked layout".into()));
    }
    for b in [b1, b2] {
        let gram = stacked_gram(grid, b, b);
        let dev = (gram - DMatrix::identity(b.ncols(), b.ncols())).amax();
        if dev > FUNCTIONAL_ORTHONORMAL_TOL {
            return Err(FtsError::NotOrthonormal(dev));
        }
    }
    let r = b1.ncols().max(b2.ncols());
    if r == 0 {
        return Ok(0.0);
    }
    let cross = stacked_gram(grid, b1, b2).norm_squared();
    Ok((1.0 - cross / r as f64).clamp(0.0, 1.0).sqrt())
}
