//! JSON experiment configuration. Every field has a default, so `{}` is a
//! valid config.

use std::path::{Path, PathBuf};

use hdfts::forecast::{Method, PipelineConfig};
use hdfts::simgen::SimDesign;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Monte Carlo replications of a simulated design.
    #[default]
    Simulate,
    /// Segmentation and diagnostics of one panel.
    Segment,
    /// Forecasts past the end of one panel.
    Forecast,
    /// Expanding-window evaluation on one panel.
    Evaluate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Simulated design; also the panel source for the single-panel modes
    /// when `input` is absent (one draw at `seed`).
    pub design: SimDesign,
    /// Long-format CSV panel.
    pub input: Option<PathBuf>,
    /// Fourier smoothing of the input before anything else.
    pub smooth_basis: Option<usize>,
    pub methods: Vec<Method>,
    pub horizons: Vec<usize>,
    /// Shared settings; `method` and `horizon` are overridden per run.
    pub pipeline: PipelineConfig,
    pub replications: usize,
    pub seed: u64,
    /// Training size of the first expanding-window origin; defaults to two
    /// thirds of the panel.
    pub train_size: Option<usize>,
    pub out: PathBuf,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Simulate,
            design: SimDesign::default(),
            input: None,
            smooth_basis: None,
            methods: vec![Method::SegV, Method::UniV],
            horizons: vec![1],
            pipeline: PipelineConfig::default(),
            replications: 100,
            seed: 1,
            train_size: None,
            out: PathBuf::from("out"),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Short-lag settings (`k0 = m = 3`) for small real-data panels.
    pub fn with_short_lags(mut self) -> Self {
        self.pipeline.seg.k0 = 3;
        self.pipeline.seg.m = 3;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("at least one method is required".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(CliError::Config("horizons must be a nonempty list of positive integers".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if self.mode == Mode::Simulate && self.input.is_some() {
            return Err(CliError::Config("simulate draws its own panels; remove `input`".into()));
        }
        if self.smooth_basis.is_some() && self.input.is_none() {
            return Err(CliError::Config("smooth_basis applies to an input panel".into()));
        }
        self.design.resolved()?;
        self.pipeline.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!((cfg.pipeline.seg.k0, cfg.pipeline.seg.m), (5, 5));
        cfg.validate().unwrap();
        let short = cfg.with_short_lags();
        assert_eq!((short.pipeline.seg.k0, short.pipeline.seg.m), (3, 3));
    }

    #[test]
    fn partial_config_and_round_trip() {
        let cfg = ExperimentConfig::from_json(
            r#"{"mode": "evaluate", "methods": ["SegV", "Uni.FTSegV"], "design": {"kind": "largep", "p": 12},
                "pipeline": {"seg": {"rounds": 2}}, "horizons": [1, 2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Evaluate);
        assert_eq!(cfg.methods, vec![Method::SegV, Method::UniFTSegV]);
        assert_eq!(cfg.pipeline.seg.rounds, 2);
        assert_eq!(cfg.pipeline.seg.k0, 5);
        assert_eq!(cfg.design.n, 400);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(ExperimentConfig::from_json(r#"{"mdoe": "simulate"}"#), Err(CliError::Config(_))));
        let bad = [
            r#"{"replications": 0}"#,
            r#"{"methods": []}"#,
            r#"{"horizons": [0]}"#,
            r#"{"threads": 0}"#,
            r#"{"input": "x.csv"}"#,
            r#"{"design": {"kind": "largep", "p": 7}}"#,
            r#"{"pipeline": {"seg": {"c_rho": 2.0}}}"#,
        ];
        for text in bad {
            assert!(ExperimentConfig::from_json(text).unwrap().validate().is_err(), "{text}");
        }
    }
}
