//! Experiment execution and artifact emission.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hdfts::autocov::ThresholdPlan;
use hdfts::experiment::{run_monte_carlo, MethodSummary, MonteCarloConfig, Replication};
use hdfts::forecast::{expanding_window_eval, forecast_from, run_pipeline, GroupForecast, Method, PipelineConfig};
use hdfts::metrics::{mspe_mape_many, SegFrequencies};
use hdfts::segmentation::{fcac_measure, segment, FcacEntry, Segmentation};
use hdfts::simgen::{generate, OracleTruth, SimDesign};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{CliError, Result};
use crate::panel_io::{load_panel, LabeledPanel};
use crate::smooth::smooth_panel;

pub const RESULTS_FILE: &str = "results.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const HEATMAP_FILE: &str = "heatmap.tsv";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const GROUPS_FILE: &str = "groups.json";

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    pub methods: BTreeMap<String, MethodSummary>,
    pub segmentation: BTreeMap<String, SegFrequencies>,
    pub replications: Vec<Replication>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateResults {
    pub seed: u64,
    pub replications: usize,
    pub design: SimDesign,
    pub methods: Vec<Method>,
    pub pipeline: PipelineConfig,
    pub horizons: Vec<HorizonReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentResults {
    pub n: usize,
    pub p: usize,
    pub q_hat: usize,
    pub rho_hat: usize,
    /// Component groups as column ranges of `Â`; see `groups.json`.
    pub groups: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupsFile {
    pub series: Vec<String>,
    /// Component groups as column ranges of `a_hat`.
    pub groups: Vec<Vec<usize>>,
    /// `Â`, row-major.
    pub a_hat: Vec<Vec<f64>>,
    /// `V̂^{-1/2}`, row-major; the components are `Âᵀ V̂^{-1/2} Y_t`.
    pub normalizer: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub method: Method,
    pub horizon: usize,
    pub q_hat: Option<usize>,
    pub groups: Vec<GroupForecast>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastResults {
    pub n: usize,
    pub p: usize,
    pub forecasts: Vec<ForecastSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    pub horizon: usize,
    pub origins: usize,
    pub mspe: f64,
    pub mape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResults {
    pub n: usize,
    pub p: usize,
    pub train_size: usize,
    pub rows: Vec<EvalRow>,
}

/// Contents of `results.json`, tagged by mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Results {
    Simulate(SimulateResults),
    Segment(SegmentResults),
    Forecast(ForecastResults),
    Evaluate(EvaluateResults),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Eigenvalues of `Ŵ`, descending.
    pub w_eigenvalues: Vec<f64>,
    /// `T̂` for the columns of `Â`.
    pub t_matrix: Vec<Vec<f64>>,
    pub rho_hat: usize,
    pub groups: Vec<Vec<usize>>,
    pub threshold_plan: Option<ThresholdPlan>,
    /// Largest lag in the heatmap table.
    pub heatmap_max_lag: usize,
    pub heatmap_file: String,
}

/// One predicted value; `actual` is empty past the end of the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub method: String,
    pub horizon: usize,
    /// Training size; the target is observation `origin + horizon` (1-based).
    pub origin: usize,
    pub series: String,
    pub u: f64,
    pub predicted: f64,
    pub actual: Option<f64>,
}

/// Paths written by a run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub results: Results,
    pub files: Vec<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Results> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_diagnostics(path: &Path) -> Result<Diagnostics> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Csv { path: path.to_path_buf(), message: e.to_string() }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, delimiter: u8) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Tab-separated `i, j, k, value` rows.
pub fn write_heatmap(path: &Path, entries: &[FcacEntry]) -> Result<()> {
    write_rows(path, entries, b'\t')
}

pub fn read_heatmap(path: &Path) -> Result<Vec<FcacEntry>> {
    read_rows(path, b'\t')
}

pub fn write_forecasts(path: &Path, records: &[ForecastRecord]) -> Result<()> {
    if records.is_empty() {
        let header = "method,horizon,origin,series,u,predicted,actual\n";
        return std::fs::write(path, header).map_err(|e| CliError::io(path, e));
    }
    write_rows(path, records, b',')
}

pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRecord>> {
    read_rows(path, b',')
}

fn records_for(
    lp: &LabeledPanel,
    method: Method,
    horizon: usize,
    origin: usize,
    predicted: &[f64],
    actual: Option<&[f64]>,
) -> Vec<ForecastRecord> {
    let big_n = lp.panel.n_points();
    let mut out = Vec::with_capacity(predicted.len());
    for (j, s) in lp.series.iter().enumerate() {
        for (a, u) in lp.u.iter().enumerate() {
            let idx = j * big_n + a;
            out.push(ForecastRecord {
                method: method.name().to_string(),
                horizon,
                origin,
                series: s.clone(),
                u: *u,
                predicted: predicted[idx],
                actual: actual.map(|row| row[idx]),
            });
        }
    }
    out
}

fn last_row(lp: &LabeledPanel) -> Vec<f64> {
    lp.panel.data().row(lp.panel.n() - 1).iter().copied().collect()
}

/// The input panel (smoothed if requested) or one draw of the design.
fn source_panel(cfg: &ExperimentConfig) -> Result<(LabeledPanel, Option<OracleTruth>)> {
    match &cfg.input {
        Some(path) => {
            let mut lp = load_panel(path)?;
            if let Some(k) = cfg.smooth_basis {
                lp = lp.with_panel(smooth_panel(&lp.panel, k)?);
            }
            Ok((lp, None))
        }
        None => {
            let (panel, truth) = generate(&cfg.design, cfg.seed)?;
            Ok((LabeledPanel::unlabeled(panel), truth))
        }
    }
}

fn diagnostics_of(seg: &Segmentation, max_lag: usize) -> Diagnostics {
    Diagnostics {
        w_eigenvalues: seg.w_eigenvalues.clone(),
        t_matrix: rows_of(&seg.t_matrix),
        rho_hat: seg.rho_hat,
        groups: seg.groups.clone(),
        threshold_plan: seg.threshold_plan.clone(),
        heatmap_max_lag: max_lag,
        heatmap_file: HEATMAP_FILE.to_string(),
    }
}

/// Segments `lp`, writes `diagnostics.json` and the heatmap, returns the segmentation.
fn emit_diagnostics(cfg: &ExperimentConfig, lp: &LabeledPanel, files: &mut Vec<PathBuf>) -> Result<Segmentation> {
    let seg = segment(&lp.panel, &cfg.pipeline.seg)?;
    let m = cfg.pipeline.seg.m;
    let heatmap = cfg.out.join(HEATMAP_FILE);
    write_heatmap(&heatmap, &fcac_measure(&lp.panel, m)?)?;
    let diag = cfg.out.join(DIAGNOSTICS_FILE);
    write_json(&diag, &diagnostics_of(&seg, m))?;
    files.push(diag);
    files.push(heatmap);
    Ok(seg)
}

fn methods_with_oracle(methods: &[Method], truth: bool) -> Vec<Method> {
    let mut out: Vec<Method> = methods.iter().copied().filter(|m| truth || *m != Method::Oracle).collect();
    if truth && !out.contains(&Method::Oracle) {
        out.push(Method::Oracle);
    }
    out
}

fn run_simulate(cfg: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Results> {
    let design = cfg.design.resolved()?;
    let mut horizons = Vec::with_capacity(cfg.horizons.len());
    for &h in &cfg.horizons {
        log::info!("simulating {} replications at horizon {h}", cfg.replications);
        let report = run_monte_carlo(&MonteCarloConfig {
            design: design.clone(),
            methods: cfg.methods.clone(),
            pipeline: PipelineConfig { horizon: h, ..cfg.pipeline.clone() },
            reps: cfg.replications,
            seed: cfg.seed,
        })?;
        horizons.push(HorizonReport {
            horizon: h,
            methods: report.methods,
            segmentation: report.segmentation,
            replications: report.replications,
        });
    }

    // diagnostics and forecasts of the first replication
    let (lp, truth) = source_panel(cfg)?;
    emit_diagnostics(cfg, &lp, files)?;
    let actual = last_row(&lp);
    let mut records = Vec::new();
    for &h in &cfg.horizons {
        for m in methods_with_oracle(&cfg.methods, truth.is_some()) {
            let pcfg = PipelineConfig { method: m, horizon: h, ..cfg.pipeline.clone() };
            let f = run_pipeline(&lp.panel, &pcfg, truth.as_ref())?;
            records.extend(records_for(&lp, m, h, lp.panel.n() - h, &f.predicted, Some(&actual)));
        }
    }
    let path = cfg.out.join(FORECASTS_FILE);
    write_forecasts(&path, &records)?;
    files.push(path);

    Ok(Results::Simulate(SimulateResults {
        seed: cfg.seed,
        replications: cfg.replications,
        design,
        methods: cfg.methods.clone(),
        pipeline: cfg.pipeline.clone(),
        horizons,
    }))
}

fn run_segment(cfg: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Results> {
    let (lp, _) = source_panel(cfg)?;
    let seg = emit_diagnostics(cfg, &lp, files)?;
    let groups_path = cfg.out.join(GROUPS_FILE);
    write_json(
        &groups_path,
        &GroupsFile {
            series: lp.series.clone(),
            groups: seg.groups.clone(),
            a_hat: rows_of(&seg.a_hat),
            normalizer: rows_of(&seg.normalizer),
        },
    )?;
    files.push(groups_path);
    Ok(Results::Segment(SegmentResults {
        n: lp.panel.n(),
        p: lp.panel.p(),
        q_hat: seg.q_hat(),
        rho_hat: seg.rho_hat,
        groups: seg.groups.clone(),
    }))
}

fn run_forecast(cfg: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Results> {
    let (lp, truth) = source_panel(cfg)?;
    let mut summaries = Vec::new();
    let mut records = Vec::new();
    for &h in &cfg.horizons {
        for m in methods_with_oracle(&cfg.methods, false) {
            let pcfg = PipelineConfig { method: m, horizon: h, ..cfg.pipeline.clone() };
            let f = forecast_from(&lp.panel, &pcfg, truth.as_ref())?;
            records.extend(records_for(&lp, m, h, lp.panel.n(), &f.predicted, None));
            summaries.push(ForecastSummary {
                method: m,
                horizon: h,
                q_hat: f.segmentation.as_ref().map(|s| s.q_hat()),
                groups: f.groups,
            });
        }
    }
    let path = cfg.out.join(FORECASTS_FILE);
    write_forecasts(&path, &records)?;
    files.push(path);
    Ok(Results::Forecast(ForecastResults {
        n: lp.panel.n(),
        p: lp.panel.p(),
        forecasts: summaries,
    }))
}

fn run_evaluate(cfg: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Results> {
    let (lp, _) = source_panel(cfg)?;
    let n = lp.panel.n();
    let train_size = cfg.train_size.unwrap_or(2 * n / 3);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &h in &cfg.horizons {
        for m in methods_with_oracle(&cfg.methods, false) {
            log::info!("evaluating {m} at horizon {h}");
            let pcfg = PipelineConfig { method: m, horizon: h, ..cfg.pipeline.clone() };
            let origins = expanding_window_eval(&lp.panel, train_size, &pcfg)?;
            let (mspe, mape) = mspe_mape_many(origins.iter().map(|o| (o.predicted.as_slice(), o.actual.as_slice())))?;
            for o in &origins {
                records.extend(records_for(&lp, m, h, o.origin, &o.predicted, Some(&o.actual)));
            }
            rows.push(EvalRow {
                method: m,
                horizon: h,
                origins: origins.len(),
                mspe,
                mape,
            });
        }
    }
    let path = cfg.out.join(FORECASTS_FILE);
    write_forecasts(&path, &records)?;
    files.push(path);
    Ok(Results::Evaluate(EvaluateResults { n, p: lp.panel.p(), train_size, rows }))
}

/// Runs `cfg` on the current rayon pool and writes its artifacts into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let mut files = Vec::new();
    let results = match cfg.mode {
        Mode::Simulate => run_simulate(cfg, &mut files)?,
        Mode::Segment => run_segment(cfg, &mut files)?,
        Mode::Forecast => run_forecast(cfg, &mut files)?,
        Mode::Evaluate => run_evaluate(cfg, &mut files)?,
    };
    let path = cfg.out.join(RESULTS_FILE);
    write_json(&path, &results)?;
    files.insert(0, path);
    Ok(RunOutcome { results, files })
}

/// [`run_experiment`] on a dedicated pool of `threads` workers, or on the
/// global pool when `threads` is `None`.
pub fn run_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutcome> {
    match threads {
        None => run_experiment(cfg),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("cannot build a pool of {t} threads: {e}")))?
            .install(|| run_experiment(cfg)),
    }
}
