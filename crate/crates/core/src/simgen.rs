//! Seeded simulation designs: grouped factor examples, the large-p design,
//! a VFAR(1) generator with its three-step estimator, and grouped VFAR
//! forecasts on raw or transformed series.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autocov::{sample_autocov, AutocovSet};
use crate::error::{FtsError, Result};
use crate::fda::linalg::least_squares;
use crate::fda::{apply_matrix_to_row, kernel_sym_eigen, spectral_radius, CurvePanel, FourierBasis, Grid, KernelMatrix};
use crate::segmentation::{components, ranked_pairs, segment_run, SegmentationConfig};

pub const BURN_IN: usize = 200;
pub const NOISE_BASIS_DIM: usize = 10;
pub const FACTOR_DIM: usize = 5;
pub const DEFAULT_GRID_POINTS: usize = 30;

/// Stream ids keep components of one replication independent of each other.
const STREAM_MIXING: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_FACTORS: u64 = 100;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Basis functions as the columns of an `N × K` matrix.
fn basis_matrix(basis: &FourierBasis) -> DMatrix<f64> {
    let big_n = basis.grid().len();
    DMatrix::from_fn(big_n, basis.dim(), |a, l| basis.function(l).values()[a])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Example1,
    Example2,
    Example3,
    #[serde(rename = "largep")]
    LargeP,
    Vfar,
}

/// How a random VAR transition is rescaled to its target level `ι`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionScaling {
    /// Divide by the largest singular value, so `‖U‖₂ = ι`.
    #[default]
    SpectralNorm,
    /// Divide by the largest eigenvalue modulus, so `ρ(U) = ι`.
    SpectralRadius,
}

impl TransitionScaling {
    fn scale_of(self, raw: &DMatrix<f64>) -> f64 {
        match self {
            TransitionScaling::SpectralNorm => raw.clone().svd(false, false).singular_values.max(),
            TransitionScaling::SpectralRadius => spectral_radius(raw),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimDesign {
    pub kind: DesignKind,
    pub p: usize,
    pub n: usize,
    pub n_points: usize,
    pub delta: f64,
    pub scaling: TransitionScaling,
}

impl Default for SimDesign {
    fn default() -> Self {
        SimDesign {
            kind: DesignKind::Example1,
            p: 6,
            n: 400,
            n_points: DEFAULT_GRID_POINTS,
            delta: 0.1,
            scaling: TransitionScaling::default(),
        }
    }
}

impl SimDesign {
    /// Fills in `p` for the fixed-dimension examples and checks consistency.
    pub fn resolved(&self) -> Result<Self> {
        let mut d = self.clone();
        match d.kind {
            DesignKind::Example1 => d.p = 6,
            DesignKind::Example2 => d.p = 10,
            DesignKind::Example3 => d.p = 15,
            DesignKind::LargeP => {
                if d.p == 0 || d.p % 6 != 0 {
                    return Err(FtsError::InvalidParameter(format!(
                        "large-p design needs p divisible by 6, got {}",
                        d.p
                    )));
                }
            }
            DesignKind::Vfar => {
                if d.p == 0 {
                    return Err(FtsError::InvalidParameter("p must be positive".into()));
                }
            }
        }
        if d.n < 20 {
            return Err(FtsError::InvalidParameter(format!("n must be at least 20, got {}", d.n)));
        }
        Grid::uniform(d.n_points)?;
        Ok(d)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::uniform(self.n_points)
    }

    pub fn q(&self) -> Option<usize> {
        match self.kind {
            DesignKind::Example1 => Some(3),
            DesignKind::Example2 => Some(4),
            DesignKind::Example3 => Some(5),
            DesignKind::LargeP => Some(self.p / 3),
            DesignKind::Vfar => None,
        }
    }
}

/// The latent structure behind a generated panel `Y̌_t = Ǎ(X̌_t + ε̌_t)`.
#[derive(Clone, Debug)]
pub struct OracleTruth {
    pub a_check: DMatrix<f64>,
    pub groups: Vec<Vec<usize>>,
    pub x_panel: CurvePanel,
    pub noise_panel: CurvePanel,
    /// `Ž = X̌ + ε̌`.
    pub z_panel: CurvePanel,
}

impl OracleTruth {
    pub fn q(&self) -> usize {
        self.groups.len()
    }

    /// Columns of `Ǎ` for group `l`.
    pub fn block(&self, l: usize) -> DMatrix<f64> {
        crate::segmentation::select_columns(&self.a_check, &self.groups[l])
    }

    /// `V^{-1/2} Ǎ_l`, whose span is that of the canonical loading block.
    pub fn canonical_block(&self, inv_sqrt: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
        inv_sqrt * self.block(l)
    }
}

/// `ε̌_tj = Σ_{l=1}^{10} 2^{-(l-1)} e_tjl ψ_l`.
pub fn gen_noise(n: usize, p: usize, grid: &Grid, rng: &mut ChaCha8Rng) -> Result<CurvePanel> {
    let basis = FourierBasis::new(grid, NOISE_BASIS_DIM)?;
    let phi = basis_matrix(&basis);
    let big_n = grid.len();
    let mut data = DMatrix::zeros(n, p * big_n);
    let mut coef = DVector::zeros(NOISE_BASIS_DIM);
    for t in 0..n {
        for j in 0..p {
            for l in 0..NOISE_BASIS_DIM {
                coef[l] = 0.5_f64.powi(l as i32) * normal(rng);
            }
            let curve = &phi * &coef;
            data.view_mut((t, j * big_n), (1, big_n)).copy_from(&curve.transpose());
        }
    }
    CurvePanel::new(grid.clone(), p, data)
}

/// A stationary 5-dimensional VAR(1) coefficient path and its transition matrix.
#[derive(Clone, Debug)]
pub struct FactorPath {
    pub transition: DMatrix<f64>,
    /// `len × 5`.
    pub kappa: DMatrix<f64>,
}

/// `U = ι Ǔ / s(Ǔ)` with `Ǔ` entries Uniform[-3,3], `ι ~ Uniform[0.5,1]` and
/// `s` the chosen scale.
pub fn random_transition(dim: usize, scaling: TransitionScaling, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let raw = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-3.0..=3.0));
        let rho = scaling.scale_of(&raw);
        if rho > 0.0 {
            let iota = rng.random_range(0.5..1.0);
            return raw * (iota / rho);
        }
    }
}

/// Simulates `len` steps of `κ_t = U κ_{t-1} + e_t` after the burn-in.
pub fn gen_factor_path(len: usize, scaling: TransitionScaling, rng: &mut ChaCha8Rng) -> FactorPath {
    let transition = random_transition(FACTOR_DIM, scaling, rng);
    let mut state = DVector::zeros(FACTOR_DIM);
    let mut kappa = DMatrix::zeros(len, FACTOR_DIM);
    for t in 0..BURN_IN + len {
        let e = DVector::from_fn(FACTOR_DIM, |_, _| normal(rng));
        state = &transition * &state + e;
        if t >= BURN_IN {
            kappa.row_mut(t - BURN_IN).copy_from(&state.transpose());
        }
    }
    FactorPath { transition, kappa }
}

/// Independent factor curves `ϑ_tg = Σ_{l=1}^5 κ_tgl ψ_l` for `g < n_factors`;
/// each entry is `len × N`.
pub fn gen_dynamics(
    len: usize,
    n_factors: usize,
    grid: &Grid,
    scaling: TransitionScaling,
    seed: u64,
) -> Result<Vec<(FactorPath, DMatrix<f64>)>> {
    let basis = FourierBasis::new(grid, FACTOR_DIM)?;
    let phi_t = basis_matrix(&basis).transpose();
    Ok((0..n_factors)
        .map(|g| {
            let mut rng = stream_rng(seed, STREAM_FACTORS + g as u64);
            let path = gen_factor_path(len, scaling, &mut rng);
            let curves = &path.kappa * &phi_t;
            (path, curves)
        })
        .collect())
}

/// `X̌` built from groups of time-shifted factor copies: series `s` of group
/// `g` is `ϑ_{(t+s) g}`.
fn grouped_dynamics(
    n: usize,
    sizes: &[usize],
    grid: &Grid,
    scaling: TransitionScaling,
    seed: u64,
) -> Result<(CurvePanel, Vec<Vec<usize>>)> {
    let max_shift = sizes.iter().copied().max().unwrap_or(1) - 1;
    let factors = gen_dynamics(n + max_shift, sizes.len(), grid, scaling, seed)?;
    let p: usize = sizes.iter().sum();
    let big_n = grid.len();
    let mut data = DMatrix::zeros(n, p * big_n);
    let mut groups = Vec::with_capacity(sizes.len());
    let mut j = 0;
    for (size, (_, curves)) in sizes.iter().zip(&factors) {
        let mut members = Vec::with_capacity(*size);
        for shift in 0..*size {
            data.columns_mut(j * big_n, big_n).copy_from(&curves.rows(shift, n));
            members.push(j);
            j += 1;
        }
        groups.push(members);
    }
    Ok((CurvePanel::new(grid.clone(), p, data)?, groups))
}

fn assemble(x_panel: CurvePanel, groups: Vec<Vec<usize>>, a_check: DMatrix<f64>, seed: u64) -> Result<(CurvePanel, OracleTruth)> {
    let mut rng = stream_rng(seed, STREAM_NOISE);
    let noise_panel = gen_noise(x_panel.n(), x_panel.p(), x_panel.grid(), &mut rng)?;
    let z_data = x_panel.data() + noise_panel.data();
    let z_panel = CurvePanel::new(x_panel.grid().clone(), x_panel.p(), z_data)?;
    let y = z_panel.apply_matrix(&a_check)?;
    Ok((
        y,
        OracleTruth {
            a_check,
            groups,
            x_panel,
            noise_panel,
            z_panel,
        },
    ))
}

/// Examples 1 to 3: groups of sizes `1..=q` with `q = kind + 2`, and a fully
/// random mixing matrix with Uniform[-3,3] entries.
pub fn gen_example(kind: usize, n: usize, grid: &Grid, seed: u64) -> Result<(CurvePanel, OracleTruth)> {
    gen_example_scaled(kind, n, grid, TransitionScaling::default(), seed)
}

pub fn gen_example_scaled(
    kind: usize,
    n: usize,
    grid: &Grid,
    scaling: TransitionScaling,
    seed: u64,
) -> Result<(CurvePanel, OracleTruth)> {
    if !(1..=3).contains(&kind) {
        return Err(FtsError::InvalidParameter(format!("example must be 1, 2 or 3, got {kind}")));
    }
    let q = kind + 2;
    let sizes: Vec<usize> = (1..=q).collect();
    let (x_panel, groups) = grouped_dynamics(n, &sizes, grid, scaling, seed)?;
    let p = x_panel.p();
    let mut rng = stream_rng(seed, STREAM_MIXING);
    let a_check = DMatrix::from_fn(p, p, |_, _| rng.random_range(-3.0..=3.0));
    assemble(x_panel, groups, a_check, seed)
}

/// `Ǎ = Δ1 + δ Δ2`: block diagonal 6×6 Uniform[-3,3] blocks plus two
/// Uniform[-1,1] entries at random positions of each row.
pub fn large_p_mixing(p: usize, delta: f64, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if p == 0 || p % 6 != 0 {
        return Err(FtsError::InvalidParameter(format!("p must be divisible by 6, got {p}")));
    }
    let mut a = DMatrix::zeros(p, p);
    for b in 0..p / 6 {
        for i in 0..6 {
            for j in 0..6 {
                a[(6 * b + i, 6 * b + j)] = rng.random_range(-3.0..=3.0);
            }
        }
    }
    for i in 0..p {
        for j in sample(rng, p, 2).iter() {
            a[(i, j)] += delta * rng.random_range(-1.0..=1.0);
        }
    }
    Ok(a)
}

/// Large-p design: `p/3` groups of three shifted copies.
pub fn gen_large_p(p: usize, n: usize, delta: f64, grid: &Grid, seed: u64) -> Result<(CurvePanel, OracleTruth)> {
    gen_large_p_scaled(p, n, delta, grid, TransitionScaling::default(), seed)
}

pub fn gen_large_p_scaled(
    p: usize,
    n: usize,
    delta: f64,
    grid: &Grid,
    scaling: TransitionScaling,
    seed: u64,
) -> Result<(CurvePanel, OracleTruth)> {
    let mut rng = stream_rng(seed, STREAM_MIXING);
    let a_check = large_p_mixing(p, delta, &mut rng)?;
    let sizes = vec![3; p / 3];
    let (x_panel, groups) = grouped_dynamics(n, &sizes, grid, scaling, seed)?;
    assemble(x_panel, groups, a_check, seed)
}

/// Generated VFAR(1) data: `n + 1` observations of `Y_tj = s(u)ᵀ θ_tj`, the
/// last one being the held-out target.
#[derive(Clone, Debug)]
pub struct VfarData {
    pub panel: CurvePanel,
    /// `5p × 5p`, blocks `B_ij` of size 5×5.
    pub b: DMatrix<f64>,
    pub basis_dim: usize,
}

impl VfarData {
    /// Observations available for fitting.
    pub fn train(&self) -> Result<CurvePanel> {
        self.panel.head(self.panel.n() - 1)
    }

    /// Held-out final observation laid out as a panel row.
    pub fn target(&self) -> Vec<f64> {
        self.panel.data().row(self.panel.n() - 1).iter().copied().collect()
    }

    /// `Q_ij(u,v) = s(u)ᵀ B_ij s(v)`.
    pub fn q_kernel(&self) -> Result<KernelMatrix> {
        q_from_blocks(self.panel.grid(), &self.b, &vec![basis_matrix(&FourierBasis::new(self.panel.grid(), self.basis_dim)?); self.panel.p()])
    }
}

/// `Q_ij(u,v) = s_i(u)ᵀ B_ij s_j(v)` for per-series `N × K` bases.
fn q_from_blocks(grid: &Grid, b: &DMatrix<f64>, bases: &[DMatrix<f64>]) -> Result<KernelMatrix> {
    let p = bases.len();
    let big_n = grid.len();
    let k = if p > 0 { bases[0].ncols() } else { 0 };
    let mut data = DMatrix::zeros(p * big_n, p * big_n);
    for i in 0..p {
        for j in 0..p {
            let bij = b.view((i * k, j * k), (k, k));
            let block = &bases[i] * bij * bases[j].transpose();
            data.view_mut((i * big_n, j * big_n), (big_n, big_n)).copy_from(&block);
        }
    }
    KernelMatrix::new(grid.clone(), p, p, data)
}

/// `θ_t = B θ_{t-1} + e_t` with standard normal `B` rescaled to level `ι ~ U[0.5,1]`.
pub fn gen_vfar(p: usize, n: usize, grid: &Grid, seed: u64) -> Result<VfarData> {
    gen_vfar_scaled(p, n, grid, TransitionScaling::default(), seed)
}

pub fn gen_vfar_scaled(p: usize, n: usize, grid: &Grid, scaling: TransitionScaling, seed: u64) -> Result<VfarData> {
    if p == 0 || n < 2 {
        return Err(FtsError::InvalidParameter("VFAR design needs p ≥ 1 and n ≥ 2".into()));
    }
    let dim = FACTOR_DIM * p;
    let mut rng = stream_rng(seed, STREAM_MIXING);
    let raw = DMatrix::from_fn(dim, dim, |_, _| normal(&mut rng));
    let rho = scaling.scale_of(&raw);
    let iota = rng.random_range(0.5..1.0);
    let b = raw * (iota / rho);
    let mut rng = stream_rng(seed, STREAM_NOISE);
    let basis = FourierBasis::new(grid, FACTOR_DIM)?;
    let phi_t = basis_matrix(&basis).transpose();
    let big_n = grid.len();
    let total = n + 1;
    let mut state = DVector::zeros(dim);
    let mut data = DMatrix::zeros(total, p * big_n);
    for t in 0..BURN_IN + total {
        let e = DVector::from_fn(dim, |_, _| normal(&mut rng));
        state = &b * &state + e;
        if t >= BURN_IN {
            let row = t - BURN_IN;
            for j in 0..p {
                let theta = state.rows(j * FACTOR_DIM, FACTOR_DIM);
                let curve = theta.transpose() * &phi_t;
                data.view_mut((row, j * big_n), (1, big_n)).copy_from(&curve);
            }
        }
    }
    Ok(VfarData {
        panel: CurvePanel::new(grid.clone(), p, data)?,
        b,
        basis_dim: FACTOR_DIM,
    })
}

/// Three-step VFAR(1) estimate: per-series FPCA, least squares on stacked
/// scores, recovered functional coefficient.
#[derive(Clone, Debug)]
pub struct VfarFit {
    grid: Grid,
    /// Per-series `N × K` eigenfunction matrices.
    pub bases: Vec<DMatrix<f64>>,
    /// `pK × pK`.
    pub b_hat: DMatrix<f64>,
    /// `n × pK` uncentred scores.
    pub scores: DMatrix<f64>,
}

impl VfarFit {
    pub fn n_components(&self) -> usize {
        self.bases.first().map_or(0, |b| b.ncols())
    }

    /// Scores `⟨Y_j, ŝ_jl⟩` of one panel row.
    pub fn project_row(&self, row: &[f64]) -> DVector<f64> {
        let big_n = self.grid.len();
        let k = self.n_components();
        let w = self.grid.weights();
        let mut out = DVector::zeros(self.bases.len() * k);
        for (j, basis) in self.bases.iter().enumerate() {
            for l in 0..k {
                out[j * k + l] = (0..big_n).map(|a| w[a] * row[j * big_n + a] * basis[(a, l)]).sum();
            }
        }
        out
    }

    /// `∫ Q̂(·,v) Y(v) dv` for the given panel row.
    pub fn forecast(&self, row: &[f64]) -> Vec<f64> {
        let big_n = self.grid.len();
        let k = self.n_components();
        let next = &self.b_hat * self.project_row(row);
        let mut out = vec![0.0; self.bases.len() * big_n];
        for (i, basis) in self.bases.iter().enumerate() {
            let curve = basis * next.rows(i * k, k);
            out[i * big_n..(i + 1) * big_n].copy_from_slice(curve.as_slice());
        }
        out
    }

    pub fn q_hat(&self) -> Result<KernelMatrix> {
        q_from_blocks(&self.grid, &self.b_hat, &self.bases)
    }
}

pub fn fit_vfar(panel: &CurvePanel, n_components: usize) -> Result<VfarFit> {
    let (n, p) = (panel.n(), panel.p());
    if n < 20 {
        return Err(FtsError::InsufficientData(format!("VFAR fit needs n ≥ 20, got {n}")));
    }
    let big_n = panel.n_points();
    if n_components == 0 || n_components > big_n {
        return Err(FtsError::InvalidParameter(format!(
            "n_components must lie in 1..={big_n}, got {n_components}"
        )));
    }
    let mut bases = Vec::with_capacity(p);
    for j in 0..p {
        let s0 = sample_autocov(&panel.select_series(&[j])?, 0)?;
        let eig = kernel_sym_eigen(&s0)?;
        bases.push(eig.leading(n_components));
    }
    let mut fit = VfarFit {
        grid: panel.grid().clone(),
        bases,
        b_hat: DMatrix::zeros(0, 0),
        scores: DMatrix::zeros(0, 0),
    };
    let dim = p * n_components;
    let mut scores = DMatrix::zeros(n, dim);
    for t in 0..n {
        let row: Vec<f64> = panel.data().row(t).iter().copied().collect();
        scores.row_mut(t).copy_from(&fit.project_row(&row).transpose());
    }
    let theta1 = scores.rows(0, n - 1).into_owned();
    let theta2 = scores.rows(1, n - 1).into_owned();
    let (coef, ridged) = least_squares(&theta1, &theta2);
    if ridged {
        log::warn!("singular VFAR score Gram matrix, ridge jitter applied");
    }
    fit.b_hat = coef.transpose();
    fit.scores = scores;
    Ok(fit)
}

pub const SEG_EDGE_FRACTION: f64 = 0.1;
pub const SEG_MAX_LAG: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegVfarMode {
    /// Group the raw series.
    Y,
    /// Group the decorrelated series.
    Z,
}

#[derive(Clone, Debug)]
pub struct SegVfarForecast {
    pub groups: Vec<Vec<usize>>,
    /// Forecast of the next observation laid out as a panel row.
    pub predicted: Vec<f64>,
}

/// `T̊_ij = max_{|k| ≤ max_lag} ‖Σ̂_k,ij‖`.
pub fn max_lag_norms(panel: &CurvePanel, max_lag: usize) -> Result<DMatrix<f64>> {
    let acov = AutocovSet::compute(panel, max_lag)?;
    let p = panel.p();
    let mut t = DMatrix::zeros(p, p);
    for k in acov.kernels() {
        let norms = k.hs_norms();
        for i in 0..p {
            for j in 0..p {
                let v = norms[(i, j)].max(norms[(j, i)]);
                if v > t[(i, j)] {
                    t[(i, j)] = v;
                }
            }
        }
    }
    Ok(t)
}

/// Groups joined by the top `⌈fraction · p(p−1)/2⌉` pairs of `T̊`.
pub fn top_fraction_groups(t: &DMatrix<f64>, fraction: f64) -> Vec<Vec<usize>> {
    let p = t.nrows();
    let pairs = ranked_pairs(t);
    let keep = (fraction * pairs.len() as f64).ceil() as usize;
    components(p, pairs.into_iter().take(keep).map(|(i, j, _)| (i, j)))
}

fn grouped_vfar_forecast(panel: &CurvePanel, groups: &[Vec<usize>], n_components: usize) -> Result<Vec<f64>> {
    let big_n = panel.n_points();
    let mut out = vec![0.0; panel.p() * big_n];
    for g in groups {
        let sub = panel.select_series(g)?;
        let fit = fit_vfar(&sub, n_components)?;
        let last: Vec<f64> = sub.data().row(sub.n() - 1).iter().copied().collect();
        let pred = fit.forecast(&last);
        for (s, &j) in g.iter().enumerate() {
            out[j * big_n..(j + 1) * big_n].copy_from_slice(&pred[s * big_n..(s + 1) * big_n]);
        }
    }
    Ok(out)
}

/// One-step forecast from VFAR fits on groups found by the top-10% rule.
pub fn seg_vfar(panel: &CurvePanel, mode: SegVfarMode, n_components: usize) -> Result<SegVfarForecast> {
    match mode {
        SegVfarMode::Y => {
            let groups = top_fraction_groups(&max_lag_norms(panel, SEG_MAX_LAG)?, SEG_EDGE_FRACTION);
            let predicted = grouped_vfar_forecast(panel, &groups, n_components)?;
            Ok(SegVfarForecast { groups, predicted })
        }
        SegVfarMode::Z => {
            let run = segment_run(panel, &SegmentationConfig::default())?;
            let a = &run.segmentation.a_hat;
            let z = run.normalized.apply_matrix(&a.transpose())?;
            let groups = top_fraction_groups(&max_lag_norms(&z, SEG_MAX_LAG)?, SEG_EDGE_FRACTION);
            let z_pred = grouped_vfar_forecast(&z, &groups, n_components)?;
            let back = run.normalization.sqrt.clone() * a;
            let predicted = apply_matrix_to_row(&back, &z_pred, panel.n_points())?;
            Ok(SegVfarForecast { groups, predicted })
        }
    }
}

/// Dispatch on a design, returning the panel and (for grouped designs) its truth.
pub fn generate(design: &SimDesign, seed: u64) -> Result<(CurvePanel, Option<OracleTruth>)> {
    let d = design.resolved()?;
    let grid = d.grid()?;
    match d.kind {
        DesignKind::Example1 => gen_example_scaled(1, d.n, &grid, d.scaling, seed).map(|(y, t)| (y, Some(t))),
        DesignKind::Example2 => gen_example_scaled(2, d.n, &grid, d.scaling, seed).map(|(y, t)| (y, Some(t))),
        DesignKind::Example3 => gen_example_scaled(3, d.n, &grid, d.scaling, seed).map(|(y, t)| (y, Some(t))),
        DesignKind::LargeP => gen_large_p_scaled(d.p, d.n, d.delta, &grid, d.scaling, seed).map(|(y, t)| (y, Some(t))),
        DesignKind::Vfar => gen_vfar_scaled(d.p, d.n, &grid, d.scaling, seed).map(|v| (v.panel, None)),
    }
}
