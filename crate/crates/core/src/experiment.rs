//! Monte Carlo replications over simulated designs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FtsError, Result};
use crate::forecast::{run_pipeline, Method, PipelineConfig};
use crate::metrics::{classify_segmentation, mspe_mape, relative_mspe, seg_frequencies, SegAssessment, SegFrequencies, Summary};
use crate::simgen::{fit_vfar, gen_vfar_scaled, generate, seg_vfar, DesignKind, SegVfarMode, SimDesign};

pub const VFAR_NAME: &str = "VFAR";
pub const SEG_Y_NAME: &str = "Seg+Y";
pub const SEG_Z_NAME: &str = "Seg+Z";
/// FPCA truncation inside the VFAR comparators.
pub const VFAR_COMPONENTS: usize = 5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub design: SimDesign,
    /// Methods of the segmentation pipeline; ignored for the VFAR design.
    pub methods: Vec<Method>,
    pub pipeline: PipelineConfig,
    pub reps: usize,
    /// Replication `i` uses seed `seed + i`.
    pub seed: u64,
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(FtsError::InvalidParameter("replications must be at least 1".into()));
        }
        self.design.resolved()?;
        self.pipeline.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub mspe: f64,
    pub mape: f64,
    /// `MSPE / MSPE_oracle`, when the oracle is available.
    pub rmspe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    pub scores: BTreeMap<String, MethodScore>,
    /// Classification of the segmentation behind each segmenting method.
    pub segmentation: BTreeMap<String, SegAssessment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mspe: Summary,
    pub mape: Summary,
    pub rmspe: Option<Summary>,
    /// `mean(sd)` of rMSPE when available, MSPE otherwise.
    pub table: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub config: MonteCarloConfig,
    pub methods: BTreeMap<String, MethodSummary>,
    pub segmentation: BTreeMap<String, SegFrequencies>,
    pub replications: Vec<Replication>,
}

impl MonteCarloReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.get(name)
    }
}

fn score(pred: &[f64], actual: &[f64]) -> Result<MethodScore> {
    let (mspe, mape) = mspe_mape(pred, actual)?;
    Ok(MethodScore { mspe, mape, rmspe: None })
}

fn replicate_vfar(design: &SimDesign, seed: u64) -> Result<Replication> {
    let grid = design.grid()?;
    let data = gen_vfar_scaled(design.p, design.n, &grid, design.scaling, seed)?;
    let train = data.train()?;
    let target = data.target();
    let last: Vec<f64> = train.data().row(train.n() - 1).iter().copied().collect();
    let mut scores = BTreeMap::new();
    let vfar = fit_vfar(&train, VFAR_COMPONENTS)?;
    scores.insert(VFAR_NAME.to_string(), score(&vfar.forecast(&last), &target)?);
    for (name, mode) in [(SEG_Y_NAME, SegVfarMode::Y), (SEG_Z_NAME, SegVfarMode::Z)] {
        let f = seg_vfar(&train, mode, VFAR_COMPONENTS)?;
        scores.insert(name.to_string(), score(&f.predicted, &target)?);
    }
    Ok(Replication {
        seed,
        scores,
        segmentation: BTreeMap::new(),
    })
}

/// One replication: generate, forecast the final observation with every
/// method (and the oracle when the truth is known), classify segmentations.
pub fn replicate(cfg: &MonteCarloConfig, seed: u64) -> Result<Replication> {
    let design = cfg.design.resolved()?;
    if design.kind == DesignKind::Vfar {
        return replicate_vfar(&design, seed);
    }
    let (panel, truth) = generate(&design, seed)?;
    let actual: Vec<f64> = panel.data().row(panel.n() - 1).iter().copied().collect();
    let mut methods = cfg.methods.clone();
    if truth.is_some() && !methods.contains(&Method::Oracle) {
        methods.push(Method::Oracle);
    }
    let mut scores = BTreeMap::new();
    let mut segmentation = BTreeMap::new();
    for &method in &methods {
        let f = run_pipeline(&panel, &cfg.pipeline.with_method(method), truth.as_ref())?;
        scores.insert(method.name().to_string(), score(&f.predicted, &actual)?);
        if let (Some(seg), Some(t)) = (&f.segmentation, &truth) {
            segmentation.insert(method.name().to_string(), classify_segmentation(t, seg)?);
        }
    }
    if let Some(oracle) = scores.get(Method::Oracle.name()).map(|s| s.mspe) {
        for s in scores.values_mut() {
            s.rmspe = Some(relative_mspe(s.mspe, oracle)?);
        }
    }
    Ok(Replication {
        seed,
        scores,
        segmentation,
    })
}

/// Aggregates replications into per-method summaries and segmentation frequencies.
pub fn summarize(reps: &[Replication]) -> (BTreeMap<String, MethodSummary>, BTreeMap<String, SegFrequencies>) {
    let mut names: Vec<&String> = reps.iter().flat_map(|r| r.scores.keys()).collect();
    names.sort();
    names.dedup();
    let mut methods = BTreeMap::new();
    for name in names {
        let scores: Vec<&MethodScore> = reps.iter().filter_map(|r| r.scores.get(name)).collect();
        let mspe: Vec<f64> = scores.iter().map(|s| s.mspe).collect();
        let mape: Vec<f64> = scores.iter().map(|s| s.mape).collect();
        let rmspe: Vec<f64> = scores.iter().filter_map(|s| s.rmspe).collect();
        let (Some(mspe), Some(mape)) = (Summary::of(&mspe), Summary::of(&mape)) else {
            continue;
        };
        let rmspe = if rmspe.len() == scores.len() { Summary::of(&rmspe) } else { None };
        let table = rmspe.as_ref().unwrap_or(&mspe).formatted();
        methods.insert(name.clone(), MethodSummary { mspe, mape, rmspe, table });
    }
    let mut seg_names: Vec<&String> = reps.iter().flat_map(|r| r.segmentation.keys()).collect();
    seg_names.sort();
    seg_names.dedup();
    let segmentation = seg_names
        .into_iter()
        .map(|name| {
            let a: Vec<SegAssessment> = reps.iter().filter_map(|r| r.segmentation.get(name).cloned()).collect();
            (name.clone(), seg_frequencies(&a))
        })
        .collect();
    (methods, segmentation)
}

/// Runs `cfg.reps` replications in parallel; the report does not depend on
/// the number of worker threads.
pub fn run_monte_carlo(cfg: &MonteCarloConfig) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let replications: Vec<Replication> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|i| replicate(cfg, cfg.seed + i))
        .collect::<Result<_>>()?;
    let (methods, segmentation) = summarize(&replications);
    Ok(MonteCarloReport {
        config: cfg.clone(),
        methods,
        segmentation,
        replications,
    })
}
