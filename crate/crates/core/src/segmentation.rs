//! Segmentation transformation: normalization, eigenanalysis of the
//! accumulated autocovariance matrix, cross-autocovariance maxima and graph
//! grouping of the transformed components.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autocov::{AutocovSet, ThresholdPlan};
use crate::error::{FtsError, Result};
use crate::fda::{integrated_outer, inv_sqrt_default, sym_eigen, sym_sqrt, CurvePanel, KernelMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Lags `0..=k0` enter `Ŵ`.
    pub k0: usize,
    /// Lags `|k| ≤ m` enter `T̂`.
    pub m: usize,
    pub c_rho: f64,
    pub delta_n: f64,
    pub use_threshold: bool,
    pub rounds: usize,
    pub cv_folds: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            k0: 5,
            m: 5,
            c_rho: 0.75,
            delta_n: 0.0,
            use_threshold: false,
            rounds: 1,
            cv_folds: 5,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k0 < 1 {
            return Err(FtsError::InvalidParameter("k0 must be at least 1".into()));
        }
        if !(self.c_rho > 0.0 && self.c_rho <= 1.0) {
            return Err(FtsError::InvalidParameter(format!("c_rho must lie in (0, 1], got {}", self.c_rho)));
        }
        if !(self.delta_n >= 0.0) {
            return Err(FtsError::InvalidParameter("delta_n must be nonnegative".into()));
        }
        if self.rounds < 1 {
            return Err(FtsError::InvalidParameter("rounds must be at least 1".into()));
        }
        if self.use_threshold && self.cv_folds < 2 {
            return Err(FtsError::InvalidParameter("cross-validation needs at least 2 folds".into()));
        }
        Ok(())
    }

    fn max_lag(&self) -> usize {
        self.k0.max(self.m)
    }
}

/// Output of [`segment`].
#[derive(Clone, Debug)]
pub struct Segmentation {
    /// `V̂^{-1/2}`.
    pub normalizer: DMatrix<f64>,
    /// Eigenvectors of `Ŵ`, descending eigenvalue order.
    pub gamma_hat: DMatrix<f64>,
    /// Column `l` of `Â` is column `permutation[l]` of `Γ̂` (first round).
    pub permutation: Vec<usize>,
    /// First-round groups as indices into the columns of `Γ̂`.
    pub eigen_groups: Vec<Vec<usize>>,
    /// Final groups as contiguous column ranges of `Â`.
    pub groups: Vec<Vec<usize>>,
    pub a_hat: DMatrix<f64>,
    /// `T̂` for the columns of the final `Â`.
    pub t_matrix: DMatrix<f64>,
    /// First-round edge count.
    pub rho_hat: usize,
    pub w_eigenvalues: Vec<f64>,
    pub threshold_plan: Option<ThresholdPlan>,
}

impl Segmentation {
    pub fn q_hat(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.a_hat.nrows()
    }

    /// Columns of `Â` belonging to group `l`.
    pub fn block(&self, l: usize) -> DMatrix<f64> {
        select_columns(&self.a_hat, &self.groups[l])
    }
}

/// A segmentation together with the intermediate quantities the forecasting
/// pipeline reuses.
#[derive(Clone, Debug)]
pub struct SegmentationRun {
    pub segmentation: Segmentation,
    pub normalization: Normalization,
    pub normalized: CurvePanel,
    /// Unthresholded autocovariances of the normalized panel.
    pub acov: AutocovSet,
}

pub(crate) fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), cols.len());
    for (c, &j) in cols.iter().enumerate() {
        out.set_column(c, &m.column(j));
    }
    out
}

/// `∫ K(u,u) du` for a square kernel matrix.
pub fn integrated_diagonal(k: &KernelMatrix) -> DMatrix<f64> {
    let big_n = k.grid().len();
    let w = k.grid().weights();
    let d = k.data();
    DMatrix::from_fn(k.p_rows(), k.p_cols(), |i, j| {
        (0..big_n).map(|a| w[a] * d[(i * big_n + a, j * big_n + a)]).sum()
    })
}

/// `V̂ = ∫ Σ̂_0(u,u) du` with its inverse and forward square roots.
#[derive(Clone, Debug)]
pub struct Normalization {
    pub v: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
}

impl Normalization {
    pub fn estimate(panel: &CurvePanel) -> Result<Self> {
        let s0 = crate::autocov::sample_autocov(panel, 0)?;
        Self::from_lag0(&s0)
    }

    pub fn from_lag0(s0: &KernelMatrix) -> Result<Self> {
        let v = integrated_diagonal(s0);
        let v = (&v + v.transpose()) * 0.5;
        Ok(Normalization {
            inv_sqrt: inv_sqrt_default(&v)?,
            sqrt: sym_sqrt(&v)?,
            v,
        })
    }

    pub fn identity(p: usize) -> Self {
        Normalization {
            v: DMatrix::identity(p, p),
            inv_sqrt: DMatrix::identity(p, p),
            sqrt: DMatrix::identity(p, p),
        }
    }
}

/// `(V̂^{-1/2} Y_t, V̂^{-1/2})`.
pub fn normalize(panel: &CurvePanel) -> Result<(CurvePanel, DMatrix<f64>)> {
    let norm = Normalization::estimate(panel)?;
    Ok((panel.apply_matrix(&norm.inv_sqrt)?, norm.inv_sqrt))
}

/// `Ŵ = Σ_{k=0}^{k0} ∬ Σ̂_k(u,v) Σ̂_k(u,v)ᵀ du dv`, thresholding each lag
/// first when a plan is supplied.
pub fn build_w(acov: &AutocovSet, k0: usize, plan: Option<&ThresholdPlan>) -> Result<DMatrix<f64>> {
    let p = acov.p();
    let mut w = DMatrix::zeros(p, p);
    for k in 0..=k0 {
        let s = acov.kernel(k)?;
        let s = match plan {
            Some(plan) => {
                let omega = *plan.omegas.get(k).ok_or(FtsError::MissingLag(k))?;
                crate::autocov::threshold(s, omega)
            }
            None => s.clone(),
        };
        w += integrated_outer(&s, &s)?;
    }
    Ok((&w + w.transpose()) * 0.5)
}

/// `Γᵀ Y_t(·)` for every observation.
pub fn transform(panel: &CurvePanel, gamma: &DMatrix<f64>) -> Result<CurvePanel> {
    if gamma.nrows() != panel.p() {
        return Err(FtsError::DimensionMismatch(format!(
            "transform of {}x{} applied to p = {}",
            gamma.nrows(),
            gamma.ncols(),
            panel.p()
        )));
    }
    panel.apply_matrix(&gamma.transpose())
}

/// `T̂_ij = max_{|k|≤m} ‖Σ̂_{k,ij}‖_S` for `i ≠ j` (symmetric, zero diagonal).
pub fn cross_stats(z_acov: &AutocovSet, m: usize) -> Result<DMatrix<f64>> {
    let p = z_acov.p();
    let mut t = DMatrix::zeros(p, p);
    for k in 0..=m {
        let norms = z_acov.kernel(k)?.hs_norms();
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    // lag -k entry (i,j) is the transpose of lag k entry (j,i)
                    let v = norms[(i, j)].max(norms[(j, i)]);
                    if v > t[(i, j)] {
                        t[(i, j)] = v;
                    }
                }
            }
        }
    }
    Ok(t)
}

/// Ratio-based cut point over values sorted in descending order: the
/// maximiser over `j ≤ ⌊c·ℵ⌋` (and `j < ℵ`) of `(T_(j)+δ)/(T_(j+1)+δ)`,
/// 1-based, smallest `j` on ties.
///
/// A positive numerator over a zero denominator counts as `+∞`; `0/0` is
/// skipped. All-zero input yields `0`. A single value leaves no ratio to
/// compare and yields `1`.
pub fn select_edge_count(sorted_desc: &[f64], c: f64, delta: f64) -> usize {
    let aleph = sorted_desc.len();
    if aleph == 0 || sorted_desc.iter().all(|&v| v + delta <= 0.0) {
        return 0;
    }
    let cap = ((c * aleph as f64).floor() as usize).min(aleph - 1);
    if cap == 0 {
        return aleph;
    }
    ratio_argmax(sorted_desc, cap, delta)
}

/// `argmax_{1≤j≤cap} (v_j+δ)/(v_{j+1}+δ)` (1-based), smallest `j` on ties,
/// `x/0 = +∞` for `x > 0`, `0/0` skipped; `0` when every ratio is skipped.
pub(crate) fn ratio_argmax(sorted_desc: &[f64], cap: usize, delta: f64) -> usize {
    let mut best_j = 0;
    let mut best = f64::NEG_INFINITY;
    for j in 1..=cap.min(sorted_desc.len().saturating_sub(1)) {
        let num = sorted_desc[j - 1] + delta;
        let den = sorted_desc[j] + delta;
        let ratio = if den > 0.0 {
            num / den
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            continue;
        };
        if ratio > best {
            best = ratio;
            best_j = j;
        }
    }
    best_j
}

/// Upper-triangle pairs `(i, j)` of `t` ordered by value descending, ties by
/// index.
pub fn ranked_pairs(t: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let p = t.nrows();
    let mut pairs: Vec<(usize, usize, f64)> = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, t[(i, j)]))
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    pairs
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Connected components of `[p]` under the given edges, ordered by smallest
/// member, members ascending.
pub fn components(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(p);
    for (i, j) in edges {
        uf.union(i, j);
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); p];
    for x in 0..p {
        let r = uf.find(x);
        by_root[r].push(x);
    }
    // roots are component minima, so index order is smallest-member order
    by_root.into_iter().filter(|g| !g.is_empty()).collect()
}

/// Union-find over the top `rho_hat` pairs of `t`.
pub fn group(t: &DMatrix<f64>, rho_hat: usize, p: usize) -> Vec<Vec<usize>> {
    let edges: Vec<(usize, usize)> = ranked_pairs(t).into_iter().take(rho_hat).map(|(i, j, _)| (i, j)).collect();
    components(p, edges)
}

struct Round {
    gamma: DMatrix<f64>,
    w_eigenvalues: Vec<f64>,
    t_matrix: DMatrix<f64>,
    rho_hat: usize,
    groups: Vec<Vec<usize>>,
    plan: Option<ThresholdPlan>,
}

/// One segmentation round on an already normalized panel.
fn single_round(panel: &CurvePanel, acov: &AutocovSet, cfg: &SegmentationConfig, c_rho: f64) -> Result<Round> {
    let p = panel.p();
    let plan = if cfg.use_threshold {
        Some(ThresholdPlan::cross_validated(panel, acov, cfg.max_lag(), cfg.cv_folds)?)
    } else {
        None
    };
    let w = build_w(acov, cfg.k0, plan.as_ref())?;
    let eig = sym_eigen(&w)?;
    let used = match &plan {
        Some(plan) => acov.truncated(cfg.max_lag())?.thresholded(plan)?,
        None => acov.truncated(cfg.max_lag())?,
    };
    let z_acov = used.truncated(cfg.m)?.congruence(&eig.vectors)?;
    let t_matrix = cross_stats(&z_acov, cfg.m)?;
    let sorted: Vec<f64> = ranked_pairs(&t_matrix).into_iter().map(|(_, _, v)| v).collect();
    let rho_hat = if p > 1 { select_edge_count(&sorted, c_rho, cfg.delta_n) } else { 0 };
    let groups = group(&t_matrix, rho_hat, p);
    Ok(Round {
        gamma: eig.vectors,
        w_eigenvalues: eig.values,
        t_matrix,
        rho_hat,
        groups,
        plan,
    })
}

/// Runs the segmentation and keeps the intermediate quantities.
pub fn segment_run(panel: &CurvePanel, cfg: &SegmentationConfig) -> Result<SegmentationRun> {
    cfg.validate()?;
    if panel.n() <= cfg.max_lag() + 1 {
        return Err(FtsError::InsufficientData(format!(
            "segmentation needs n > {}, got {}",
            cfg.max_lag() + 1,
            panel.n()
        )));
    }
    let normalization = Normalization::estimate(panel)?;
    let normalized = panel.apply_matrix(&normalization.inv_sqrt)?;
    let acov = AutocovSet::compute(&normalized, cfg.max_lag())?;
    let segmentation = segment_normalized(&normalized, &acov, normalization.inv_sqrt.clone(), cfg)?;
    Ok(SegmentationRun {
        segmentation,
        normalization,
        normalized,
        acov,
    })
}

/// Segmentation of a panel that is already normalized, with its autocovariances.
pub fn segment_normalized(
    normalized: &CurvePanel,
    acov: &AutocovSet,
    normalizer: DMatrix<f64>,
    cfg: &SegmentationConfig,
) -> Result<Segmentation> {
    cfg.validate()?;
    let p = normalized.p();
    let first = single_round(normalized, acov, cfg, cfg.c_rho)?;
    let permutation: Vec<usize> = first.groups.iter().flatten().copied().collect();
    let mut a_hat = select_columns(&first.gamma, &permutation);
    let mut groups = contiguous(&first.groups);
    let mut t_matrix = permute_symmetric(&first.t_matrix, &permutation);

    for _ in 1..cfg.rounds {
        let mut next_cols: Vec<DMatrix<f64>> = Vec::new();
        let mut next_groups: Vec<Vec<usize>> = Vec::new();
        let mut changed = false;
        for g in &groups {
            let block = select_columns(&a_hat, g);
            if g.len() < 2 {
                next_cols.push(block);
                next_groups.push(vec![0]);
                continue;
            }
            let sub_panel = normalized.apply_matrix(&block.transpose())?;
            let sub_acov = acov.congruence(&block)?;
            let round = single_round(&sub_panel, &sub_acov, cfg, 1.0)?;
            if round.groups.len() < 2 {
                next_cols.push(block);
                next_groups.push((0..g.len()).collect());
                continue;
            }
            changed = true;
            let perm: Vec<usize> = round.groups.iter().flatten().copied().collect();
            next_cols.push(block * select_columns(&round.gamma, &perm));
            next_groups.extend(contiguous(&round.groups));
        }
        // reassemble Â and renumber groups with global column offsets
        let mut cols = Vec::with_capacity(p);
        for b in &next_cols {
            cols.extend(b.column_iter().map(|c| c.into_owned()));
        }
        a_hat = DMatrix::from_columns(&cols);
        let mut offset = 0;
        let mut renumbered = Vec::with_capacity(next_groups.len());
        let mut sizes = next_groups.iter();
        for b in &next_cols {
            let mut width = 0;
            while width < b.ncols() {
                let g = sizes.next().expect("group sizes cover every block");
                renumbered.push(g.iter().map(|x| x + offset).collect::<Vec<_>>());
                width += g.len();
            }
            offset += b.ncols();
        }
        groups = renumbered;
        if !changed {
            break;
        }
        let base = match &first.plan {
            Some(plan) => acov.truncated(cfg.max_lag())?.thresholded(plan)?,
            None => acov.truncated(cfg.max_lag())?,
        };
        t_matrix = cross_stats(&base.truncated(cfg.m)?.congruence(&a_hat)?, cfg.m)?;
    }

    Ok(Segmentation {
        normalizer,
        gamma_hat: first.gamma,
        permutation,
        eigen_groups: first.groups,
        groups,
        a_hat,
        t_matrix,
        rho_hat: first.rho_hat,
        w_eigenvalues: first.w_eigenvalues,
        threshold_plan: first.plan,
    })
}

/// Full segmentation of a raw panel.
pub fn segment(panel: &CurvePanel, cfg: &SegmentationConfig) -> Result<Segmentation> {
    Ok(segment_run(panel, cfg)?.segmentation)
}

fn contiguous(groups: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut start = 0;
    groups
        .iter()
        .map(|g| {
            let r: Vec<usize> = (start..start + g.len()).collect();
            start += g.len();
            r
        })
        .collect()
}

fn permute_symmetric(t: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(perm.len(), perm.len(), |a, b| t[(perm[a], perm[b])])
}

/// One cell of the cross-autocorrelation table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcacEntry {
    pub i: usize,
    pub j: usize,
    pub k: i64,
    pub value: f64,
}

/// `ϖ̂_{k,ij} = ‖σ̂_{k,ij}‖_S / {∫σ̂_{0,ii}(u,u)du · ∫σ̂_{0,jj}(u,u)du}^{1/2}`
/// for `i ≤ j` and `|k| ≤ max_lag`.
pub fn fcac_measure(panel: &CurvePanel, max_lag: usize) -> Result<Vec<FcacEntry>> {
    if panel.n() <= max_lag + 1 {
        return Err(FtsError::LagOutOfRange { lag: max_lag, n: panel.n() });
    }
    let acov = AutocovSet::compute(panel, max_lag)?;
    let p = panel.p();
    let v = integrated_diagonal(acov.kernel(0)?);
    for i in 0..p {
        if !(v[(i, i)] > 0.0) {
            return Err(FtsError::ZeroVariance(i));
        }
    }
    let norms: Vec<DMatrix<f64>> = acov.kernels().iter().map(|s| s.hs_norms()).collect();
    let mut out = Vec::with_capacity(p * (p + 1) / 2 * (2 * max_lag + 1));
    for i in 0..p {
        for j in i..p {
            let scale = (v[(i, i)] * v[(j, j)]).sqrt();
            for k in -(max_lag as i64)..=(max_lag as i64) {
                let lag = k.unsigned_abs() as usize;
                let norm = if k >= 0 { norms[lag][(i, j)] } else { norms[lag][(j, i)] };
                out.push(FcacEntry { i, j, k, value: norm / scale });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::{FourierBasis, Grid};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white_panel(n: usize, p: usize, big_n: usize, seed: u64) -> CurvePanel {
        let g = Grid::uniform(big_n).unwrap();
        let basis = FourierBasis::new(&g, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = DMatrix::zeros(n, p * big_n);
        for t in 0..n {
            for j in 0..p {
                let c: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                let curve = basis.combine(&c);
                for a in 0..big_n {
                    data[(t, j * big_n + a)] = curve.values()[a];
                }
            }
        }
        CurvePanel::new(g, p, data).unwrap()
    }

    /// Two independent blocks mixed by a random matrix: block 1 is a single
    /// AR(1) curve series, block 2 two lagged copies of another.
    fn mixed_panel(n: usize, seed: u64) -> (CurvePanel, DMatrix<f64>) {
        let big_n = 11;
        let g = Grid::uniform(big_n).unwrap();
        let basis = FourierBasis::new(&g, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f1 = vec![[0.0; 3]; n + 1];
        let mut f2 = vec![[0.0; 3]; n + 1];
        let mut s1 = [0.0; 3];
        let mut s2 = [0.0; 3];
        for t in 0..n + 1 + 50 {
            for l in 0..3 {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                s1[l] = 0.8 * s1[l] + e1;
                s2[l] = -0.7 * s2[l] + e2;
            }
            if t >= 50 {
                f1[t - 50] = s1;
                f2[t - 50] = s2;
            }
        }
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-3.0..3.0));
        let mut z = DMatrix::zeros(n, 3 * big_n);
        for t in 0..n {
            let parts = [f1[t], f2[t], f2[t + 1]];
            for (j, coef) in parts.iter().enumerate() {
                let c = basis.combine(coef);
                for x in 0..big_n {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    z[(t, j * big_n + x)] = c.values()[x] + 0.1 * e;
                }
            }
        }
        let zp = CurvePanel::new(g, 3, z).unwrap();
        (zp.apply_matrix(&a).unwrap(), a)
    }

    #[test]
    fn edge_count_examples() {
        assert_eq!(select_edge_count(&[9.0, 3.0, 1.0, 0.1, 0.05, 0.04], 0.75, 0.0), 3);
        assert_eq!(select_edge_count(&[2.0; 6], 0.75, 0.0), 1);
        assert_eq!(select_edge_count(&[5.0, 0.0, 0.0, 0.0], 0.75, 0.0), 1);
        assert_eq!(select_edge_count(&[0.0; 4], 0.75, 0.0), 0);
        assert_eq!(select_edge_count(&[5.0, 3.0, 0.0, 0.0, 0.0, 0.0], 0.75, 0.0), 2);
        assert_eq!(select_edge_count(&[0.7], 0.75, 0.0), 1);
        // delta smooths the zero tail
        assert_eq!(select_edge_count(&[4.0, 2.0, 0.0, 0.0], 1.0, 1.0), 2);
    }

    #[test]
    fn grouping_examples() {
        let mut t = DMatrix::zeros(4, 4);
        t[(0, 1)] = 3.0;
        t[(1, 2)] = 2.0;
        t[(2, 3)] = 0.1;
        assert_eq!(group(&t, 2, 4), vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(group(&t, 0, 4), vec![vec![0], vec![1], vec![2], vec![3]]);
        let edges = [(4, 2), (0, 5), (5, 3)];
        assert_eq!(components(6, edges), vec![vec![0, 3, 5], vec![1], vec![2, 4]]);
    }

    #[test]
    fn normalization_examples() {
        let panel = white_panel(200, 3, 9, 1);
        let (norm, _) = normalize(&panel).unwrap();
        let v = integrated_diagonal(&crate::autocov::sample_autocov(&norm, 0).unwrap());
        assert!((v - DMatrix::identity(3, 3)).amax() < 1e-6);
        let (again, inv) = normalize(&norm).unwrap();
        assert!((inv - DMatrix::identity(3, 3)).amax() < 1e-8);
        assert!((again.data() - norm.data()).amax() < 1e-8);

        let g = Grid::uniform(5).unwrap();
        let base = white_panel(50, 1, 5, 2);
        let (unit, _) = normalize(&base).unwrap();
        let scaled = CurvePanel::new(g, 1, unit.data() * 2.0).unwrap();
        let (back, inv) = normalize(&scaled).unwrap();
        assert_abs_diff_eq!(inv[(0, 0)], 0.5, epsilon = 1e-10);
        assert!((back.data() - unit.data()).amax() < 1e-10);
    }

    #[test]
    fn w_reduces_to_norm_sum_for_scalar_series() {
        let panel = white_panel(40, 1, 7, 3);
        let acov = AutocovSet::compute(&panel, 3).unwrap();
        let w = build_w(&acov, 3, None).unwrap();
        let expected: f64 = (0..=3).map(|k| acov.kernel(k).unwrap().entry_hs_norm(0, 0).powi(2)).sum();
        assert_abs_diff_eq!(w[(0, 0)], expected, epsilon = 1e-12);
    }

    #[test]
    fn w_is_block_diagonal_for_block_diagonal_kernels() {
        let panel = white_panel(40, 3, 5, 4);
        let acov = AutocovSet::compute(&panel, 2).unwrap();
        let mut kernels = Vec::new();
        for k in 0..=2 {
            let mut s = acov.kernel(k).unwrap().clone();
            for (i, j) in [(0, 2), (2, 0), (1, 2), (2, 1)] {
                s.zero_entry(i, j);
            }
            kernels.push(s);
        }
        let set = AutocovSet::from_kernels(acov.mean_row().to_vec(), kernels).unwrap();
        let w = build_w(&set, 2, None).unwrap();
        assert_eq!(w[(0, 2)], 0.0);
        assert_eq!(w[(1, 2)], 0.0);
        assert!(w[(0, 1)] != 0.0);
    }

    #[test]
    fn transform_identity_permutation_and_parseval() {
        let panel = white_panel(10, 3, 6, 5);
        assert_eq!(transform(&panel, &DMatrix::identity(3, 3)).unwrap(), panel);
        let perm = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        let z = transform(&panel, &perm).unwrap();
        assert_eq!(z.curve_values(4, 1), panel.curve_values(4, 2));
        let q = crate::fda::orthonormalize_columns(&DMatrix::from_row_slice(3, 3, &[2., -1., 0.5, 1., 3., -2., 0., 1., 4.]));
        assert_eq!(q.ncols(), 3);
        let z = transform(&panel, &q).unwrap();
        for t in 0..10 {
            let e = |p: &CurvePanel| (0..3).map(|j| p.curve(t, j).norm().powi(2)).sum::<f64>();
            assert_abs_diff_eq!(e(&z), e(&panel), epsilon = 1e-8);
        }
    }

    #[test]
    fn cross_stats_cases() {
        let white = white_panel(3000, 3, 7, 6);
        let acov = AutocovSet::compute(&white, 2).unwrap();
        let t = cross_stats(&acov, 2).unwrap();
        let min_diag = (0..3).map(|i| acov.kernel(0).unwrap().entry_hs_norm(i, i)).fold(f64::INFINITY, f64::min);
        assert!(t.iter().all(|&v| v < min_diag / 5.0));

        let g = white.grid().clone();
        let dup = white.select_series(&[0, 1, 2, 0]).unwrap();
        let acov = AutocovSet::compute(&dup, 2).unwrap();
        let t = cross_stats(&acov, 2).unwrap();
        let (i, j, _) = ranked_pairs(&t)[0];
        assert_eq!((i, j), (0, 3));

        let t0 = cross_stats(&acov, 0).unwrap();
        assert_abs_diff_eq!(t0[(1, 2)], acov.kernel(0).unwrap().entry_hs_norm(1, 2), epsilon = 1e-14);
        assert_eq!(g.len(), 7);
    }

    #[test]
    fn scalar_panel_is_one_group() {
        let panel = white_panel(40, 1, 5, 7);
        let seg = segment(&panel, &SegmentationConfig::default()).unwrap();
        assert_eq!(seg.groups, vec![vec![0]]);
        assert_abs_diff_eq!(seg.a_hat[(0, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn recovers_two_block_structure() {
        let (panel, _) = mixed_panel(800, 8);
        let run = segment_run(&panel, &SegmentationConfig::default()).unwrap();
        let seg = &run.segmentation;
        let mut sizes: Vec<usize> = seg.groups.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
        let gtg = seg.gamma_hat.transpose() * &seg.gamma_hat;
        assert!((gtg - DMatrix::identity(3, 3)).amax() < 1e-8);
        let w = build_w(&run.acov, 5, None).unwrap();
        let lhs = &w * &seg.gamma_hat;
        let rhs = &seg.gamma_hat * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(seg.w_eigenvalues.clone()));
        assert!((lhs - rhs).amax() < 1e-6 * seg.w_eigenvalues[0]);
    }

    #[test]
    fn extra_rounds_are_fixed_point_on_singletons() {
        let panel = white_panel(300, 4, 7, 9);
        let one = segment(&panel, &SegmentationConfig::default()).unwrap();
        if one.groups.iter().all(|g| g.len() == 1) {
            let cfg = SegmentationConfig { rounds: 2, ..Default::default() };
            let two = segment(&panel, &cfg).unwrap();
            assert_eq!(two.groups, one.groups);
            assert_eq!(two.a_hat, one.a_hat);
        }
    }

    #[test]
    fn composed_rounds_reproduce_transformed_panel() {
        let (panel, _) = mixed_panel(400, 10);
        let cfg = SegmentationConfig { rounds: 3, ..Default::default() };
        let run = segment_run(&panel, &cfg).unwrap();
        let seg = &run.segmentation;
        let ata = seg.a_hat.transpose() * &seg.a_hat;
        assert!((ata - DMatrix::identity(3, 3)).amax() < 1e-8);
        let z = transform(&run.normalized, &seg.a_hat).unwrap();
        let back = z.apply_matrix(&seg.a_hat).unwrap();
        assert!((back.data() - run.normalized.data()).amax() < 1e-8);
        let flat: Vec<usize> = seg.groups.iter().flatten().copied().collect();
        assert_eq!(flat, (0..3).collect::<Vec<_>>());
    }

    #[test]
    fn split_rounds_keep_contiguous_partition() {
        let g = Grid::uniform(12).unwrap();
        for seed in 0..4 {
            let (panel, _) = crate::simgen::gen_example(1, 300, &g, seed).unwrap();
            let cfg = SegmentationConfig { rounds: 3, ..Default::default() };
            let seg = segment(&panel, &cfg).unwrap();
            let flat: Vec<usize> = seg.groups.iter().flatten().copied().collect();
            assert_eq!(flat, (0..6).collect::<Vec<_>>());
            assert!(seg.groups.iter().all(|g| !g.is_empty()));
            assert!(seg.q_hat() >= segment(&panel, &SegmentationConfig::default()).unwrap().q_hat());
        }
    }

    #[test]
    fn fcac_properties() {
        let panel = white_panel(400, 2, 7, 11);
        let dup = panel.select_series(&[0, 1, 0]).unwrap();
        let table = fcac_measure(&dup, 3).unwrap();
        assert!(table.iter().all(|e| e.i <= e.j && e.k.abs() <= 3));
        assert_eq!(table.len(), 6 * 7);
        let get = |i, j, k| table.iter().find(|e| e.i == i && e.j == j && e.k == k).unwrap().value;
        for i in 0..3 {
            let at0 = get(i, i, 0);
            assert!(at0 > 0.0);
            for k in 1..=3 {
                assert!(get(i, i, k) < at0);
            }
        }
        assert_abs_diff_eq!(get(0, 2, 0), get(0, 0, 0), epsilon = 1e-12);
        // independent series: cross values are small next to self-correlation
        assert!(get(0, 1, 1) < 0.2 * get(0, 0, 0));

        let g = Grid::uniform(4).unwrap();
        let mut data = DMatrix::from_fn(10, 8, |t, c| ((t * 8 + c) as f64).cos());
        for t in 0..10 {
            for c in 4..8 {
                data[(t, c)] = 1.0;
            }
        }
        let flat = CurvePanel::new(g, 2, data).unwrap();
        assert!(matches!(fcac_measure(&flat, 1), Err(FtsError::ZeroVariance(1))));
    }

    #[test]
    fn relabeling_permutes_groups() {
        let (panel, _) = mixed_panel(800, 12);
        let seg = segment(&panel, &SegmentationConfig::default()).unwrap();
        let relabeled = panel.select_series(&[2, 0, 1]).unwrap();
        let seg2 = segment(&relabeled, &SegmentationConfig::default()).unwrap();
        assert_eq!(seg.q_hat(), seg2.q_hat());
        // the spans of matching groups agree after undoing the relabeling
        for l in 0..seg.q_hat() {
            let b1 = seg.normalizer.clone().try_inverse().unwrap() * seg.block(l);
            let b2 = seg2.normalizer.clone().try_inverse().unwrap() * seg2.block(l);
            let b2 = DMatrix::from_fn(3, b2.ncols(), |r, c| b2[([1, 2, 0][r], c)]);
            let q1 = crate::fda::orthonormalize_columns(&b1);
            let q2 = crate::fda::orthonormalize_columns(&b2);
            let overlap = (q1.transpose() * &q2).norm_squared();
            assert_abs_diff_eq!(overlap, q1.ncols() as f64, epsilon = 1e-6);
        }
    }
}
