//! End-to-end prediction: normalize, segment, fit each group's expansion,
//! forecast its scores with a VAR and map the prediction back.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autocov::AutocovSet;
use crate::error::{FtsError, Result};
use crate::fda::{apply_matrix_to_row, CurvePanel};
use crate::segmentation::{ranked_pairs, segment_run, select_columns, Normalization, Segmentation, SegmentationConfig};
use crate::simgen::OracleTruth;
use crate::var::{fit_var, predict_var, DEFAULT_MAX_ORDER};
use crate::vmfpca::{fit_group, DimSelectConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    SegV,
    FTSegV,
    UniV,
    #[serde(rename = "Under.SegV")]
    UnderSegV,
    #[serde(rename = "Uni.SegV")]
    UniSegV,
    #[serde(rename = "Under.FTSegV")]
    UnderFTSegV,
    #[serde(rename = "Uni.FTSegV")]
    UniFTSegV,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Variant {
    Plain,
    Under,
    Uni,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::SegV,
        Method::FTSegV,
        Method::UniV,
        Method::UnderSegV,
        Method::UniSegV,
        Method::UnderFTSegV,
        Method::UniFTSegV,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SegV => "SegV",
            Method::FTSegV => "FTSegV",
            Method::UniV => "UniV",
            Method::UnderSegV => "Under.SegV",
            Method::UniSegV => "Uni.SegV",
            Method::UnderFTSegV => "Under.FTSegV",
            Method::UniFTSegV => "Uni.FTSegV",
            Method::Oracle => "Oracle",
        }
    }

    /// Whether the method runs the segmentation step.
    pub fn segments(self) -> bool {
        !matches!(self, Method::UniV | Method::Oracle)
    }

    pub fn thresholded(self) -> bool {
        matches!(self, Method::FTSegV | Method::UnderFTSegV | Method::UniFTSegV)
    }

    fn variant(self) -> Variant {
        match self {
            Method::UnderSegV | Method::UnderFTSegV => Variant::Under,
            Method::UniSegV | Method::UniFTSegV => Variant::Uni,
            _ => Variant::Plain,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = FtsError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FtsError::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub method: Method,
    pub horizon: usize,
    pub seg: SegmentationConfig,
    pub dim: DimSelectConfig,
    pub var_max_order: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            method: Method::SegV,
            horizon: 1,
            seg: SegmentationConfig::default(),
            dim: DimSelectConfig::default(),
            var_max_order: DEFAULT_MAX_ORDER,
        }
    }
}

impl PipelineConfig {
    pub fn with_method(&self, method: Method) -> Self {
        PipelineConfig { method, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(FtsError::InvalidParameter("horizon must be at least 1".into()));
        }
        if self.var_max_order == 0 {
            return Err(FtsError::InvalidParameter("var_max_order must be at least 1".into()));
        }
        self.seg.validate()?;
        self.dim.validate()
    }

    fn segmentation_config(&self) -> SegmentationConfig {
        SegmentationConfig {
            use_threshold: self.method.thresholded(),
            ..self.seg.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupForecast {
    /// Columns of the loading matrix making up the group.
    pub members: Vec<usize>,
    pub r_hat: usize,
    pub var_order: usize,
    pub predicted_scores: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Forecast {
    pub method: Method,
    pub horizon: usize,
    /// Predicted observation laid out as a panel row.
    pub predicted: Vec<f64>,
    pub groups: Vec<GroupForecast>,
    /// Present for the segmenting methods.
    pub segmentation: Option<Segmentation>,
    /// Normalization estimated on the training window.
    pub normalization: Option<Normalization>,
}

impl Forecast {
    pub fn curve(&self, j: usize, n_points: usize) -> &[f64] {
        &self.predicted[j * n_points..(j + 1) * n_points]
    }
}

/// Latent coordinates for the group fits: `Z^(l) = B_lᵀ X`, prediction mapped
/// back as `back · Σ_l B_l Z̊^(l)`.
struct Plan {
    source: CurvePanel,
    loadings: DMatrix<f64>,
    groups: Vec<Vec<usize>>,
    back: DMatrix<f64>,
}

/// Groups of `Â` columns after the Under or Uni adjustment.
fn adjust_groups(seg: &Segmentation, variant: Variant) -> Vec<Vec<usize>> {
    match variant {
        Variant::Plain => seg.groups.clone(),
        Variant::Uni => (0..seg.p()).map(|j| vec![j]).collect(),
        Variant::Under => merge_strongest_pair(&seg.groups, &seg.t_matrix),
    }
}

/// Merges the two groups joined by the largest cross-group `T̂` entry.
pub fn merge_strongest_pair(groups: &[Vec<usize>], t: &DMatrix<f64>) -> Vec<Vec<usize>> {
    if groups.len() < 2 {
        return groups.to_vec();
    }
    let mut label = vec![0; t.nrows()];
    for (l, g) in groups.iter().enumerate() {
        for &j in g {
            label[j] = l;
        }
    }
    let Some((i, j, _)) = ranked_pairs(t).into_iter().find(|&(i, j, _)| label[i] != label[j]) else {
        return groups.to_vec();
    };
    let (keep, drop) = (label[i].min(label[j]), label[i].max(label[j]));
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(groups.len() - 1);
    for (l, g) in groups.iter().enumerate() {
        if l == drop {
            continue;
        }
        let mut g = g.clone();
        if l == keep {
            g.extend(&groups[drop]);
            g.sort_unstable();
        }
        out.push(g);
    }
    out
}

fn build_plan(
    train: &CurvePanel,
    cfg: &PipelineConfig,
    truth: Option<&OracleTruth>,
) -> Result<(Plan, Option<Segmentation>, Option<Normalization>)> {
    match cfg.method {
        Method::Oracle => {
            let truth = truth.ok_or(FtsError::MissingTruth)?;
            if truth.a_check.nrows() != train.p() || truth.z_panel.n() < train.n() {
                return Err(FtsError::DimensionMismatch(
                    "oracle structure does not match the panel".into(),
                ));
            }
            let source = truth.z_panel.head(train.n())?;
            let p = train.p();
            Ok((
                Plan {
                    source,
                    loadings: DMatrix::identity(p, p),
                    groups: truth.groups.clone(),
                    back: truth.a_check.clone(),
                },
                None,
                None,
            ))
        }
        Method::UniV => {
            let p = train.p();
            Ok((
                Plan {
                    source: train.clone(),
                    loadings: DMatrix::identity(p, p),
                    groups: (0..p).map(|j| vec![j]).collect(),
                    back: DMatrix::identity(p, p),
                },
                None,
                None,
            ))
        }
        _ => {
            let run = segment_run(train, &cfg.segmentation_config())?;
            let groups = adjust_groups(&run.segmentation, cfg.method.variant());
            Ok((
                Plan {
                    source: run.normalized,
                    loadings: run.segmentation.a_hat.clone(),
                    groups,
                    back: run.normalization.sqrt.clone(),
                },
                Some(run.segmentation),
                Some(run.normalization),
            ))
        }
    }
}

fn forecast_group(plan: &Plan, members: &[usize], cfg: &PipelineConfig) -> Result<(GroupForecast, Vec<f64>)> {
    let block = select_columns(&plan.loadings, members);
    let z = plan.source.apply_matrix(&block.transpose())?;
    // autocovariances of Z^(l) directly; equal to B_lᵀ Σ̂_k B_l of the source
    let acov = AutocovSet::compute(&z, cfg.seg.k0)?;
    let identity = DMatrix::identity(members.len(), members.len());
    let model = fit_group(&z, &acov, &identity, cfg.seg.k0, &cfg.dim)?;
    let var = fit_var(&model.scores, cfg.var_max_order)?;
    let scores = predict_var(&var, &model.scores, cfg.horizon)?;
    let scores: Vec<f64> = scores.iter().copied().collect();
    let z_pred = model.reconstruct_stacked(&scores)?;
    // contribution B_l Z̊^(l) to the latent prediction
    let contribution = apply_matrix_to_row(&block, &z_pred, plan.source.n_points())?;
    Ok((
        GroupForecast {
            members: members.to_vec(),
            r_hat: model.r_hat,
            var_order: var.order,
            predicted_scores: scores,
        },
        contribution,
    ))
}

/// Forecast `horizon` steps past the end of `train`.
pub fn forecast_from(train: &CurvePanel, cfg: &PipelineConfig, truth: Option<&OracleTruth>) -> Result<Forecast> {
    cfg.validate()?;
    if train.n() <= cfg.seg.k0.max(cfg.seg.m) + 2 {
        return Err(FtsError::InsufficientData(format!(
            "training window of {} observations is too short",
            train.n()
        )));
    }
    let (plan, segmentation, normalization) = build_plan(train, cfg, truth)?;
    let mut latent = vec![0.0; train.p() * train.n_points()];
    let mut groups = Vec::with_capacity(plan.groups.len());
    for members in &plan.groups {
        let (g, contribution) = forecast_group(&plan, members, cfg)?;
        for (l, c) in latent.iter_mut().zip(&contribution) {
            *l += c;
        }
        groups.push(g);
    }
    let predicted = apply_matrix_to_row(&plan.back, &latent, train.n_points())?;
    Ok(Forecast {
        method: cfg.method,
        horizon: cfg.horizon,
        predicted,
        groups,
        segmentation,
        normalization,
    })
}

/// Trains on the first `n − h` observations and predicts observation `n`.
pub fn run_pipeline(panel: &CurvePanel, cfg: &PipelineConfig, truth: Option<&OracleTruth>) -> Result<Forecast> {
    cfg.validate()?;
    if panel.n() <= cfg.horizon + cfg.seg.k0 + 2 {
        return Err(FtsError::InsufficientData(format!(
            "pipeline needs n > h + k0 + 2, got n = {}",
            panel.n()
        )));
    }
    forecast_from(&panel.head(panel.n() - cfg.horizon)?, cfg, truth)
}

/// One expanding-window origin.
#[derive(Clone, Debug)]
pub struct OriginForecast {
    /// Training size `t0`; the target is observation `t0 + h`.
    pub origin: usize,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
}

/// Expanding-window forecasts with an arbitrary predictor `f(train) -> row`.
pub fn expanding_window_with<F>(panel: &CurvePanel, n1: usize, h: usize, predictor: F) -> Result<Vec<OriginForecast>>
where
    F: Fn(&CurvePanel) -> Result<Vec<f64>> + Sync,
{
    if h == 0 {
        return Err(FtsError::InvalidParameter("horizon must be at least 1".into()));
    }
    if n1 < 2 || n1 + h > panel.n() {
        return Err(FtsError::InsufficientData(format!(
            "expanding window needs 2 ≤ n1 and n1 + h ≤ n, got n1 = {n1}, h = {h}, n = {}",
            panel.n()
        )));
    }
    (n1..=panel.n() - h)
        .into_par_iter()
        .map(|t0| {
            let train = panel.head(t0)?;
            let predicted = predictor(&train)?;
            let actual = panel.data().row(t0 + h - 1).iter().copied().collect();
            Ok(OriginForecast {
                origin: t0,
                predicted,
                actual,
            })
        })
        .collect()
}

pub fn expanding_window_eval(panel: &CurvePanel, n1: usize, cfg: &PipelineConfig) -> Result<Vec<OriginForecast>> {
    cfg.validate()?;
    expanding_window_with(panel, n1, cfg.horizon, |train| Ok(forecast_from(train, cfg, None)?.predicted))
}
