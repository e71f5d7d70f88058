//! Evaluation measures: prediction errors, column-space discrepancy and the
//! classification of an estimated segmentation against the truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FtsError, Result};
use crate::fda::orthonormalize_columns;
use crate::segmentation::Segmentation;
use crate::simgen::OracleTruth;

/// Tolerance on `EᵀE = I` for [`subspace_d`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Plain averages of squared and absolute errors over all grid values.
pub fn mspe_mape(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(FtsError::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(FtsError::InvalidParameter("empty prediction".into()));
    }
    let n = pred.len() as f64;
    let (sq, abs) = pred
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(s, a), (p, t)| (s + (p - t).powi(2), a + (p - t).abs()));
    Ok((sq / n, abs / n))
}

/// Averages of [`mspe_mape`] over several forecast origins.
pub fn mspe_mape_many<'a>(pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>) -> Result<(f64, f64)> {
    let mut count = 0;
    let (mut s, mut a) = (0.0, 0.0);
    for (p, t) in pairs {
        let (ms, ma) = mspe_mape(p, t)?;
        s += ms;
        a += ma;
        count += 1;
    }
    if count == 0 {
        return Err(FtsError::InvalidParameter("no forecasts to evaluate".into()));
    }
    Ok((s / count as f64, a / count as f64))
}

fn check_orthonormal(e: &DMatrix<f64>) -> Result<()> {
    let dev = (e.transpose() * e - DMatrix::identity(e.ncols(), e.ncols())).amax();
    if dev > ORTHONORMAL_TOL {
        return Err(FtsError::NotOrthonormal(dev));
    }
    Ok(())
}

/// `D = {1 − tr(E1 E1ᵀ E2 E2ᵀ) / max(r1, r2)}^{1/2}` for orthonormal columns.
pub fn subspace_d(e1: &DMatrix<f64>, e2: &DMatrix<f64>) -> Result<f64> {
    if e1.nrows() != e2.nrows() {
        return Err(FtsError::DimensionMismatch(format!(
            "{} and {} rows",
            e1.nrows(),
            e2.nrows()
        )));
    }
    check_orthonormal(e1)?;
    check_orthonormal(e2)?;
    let r = e1.ncols().max(e2.ncols());
    if r == 0 {
        return Ok(0.0);
    }
    let cross = (e1.transpose() * e2).norm_squared();
    Ok((1.0 - cross / r as f64).clamp(0.0, 1.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegClass {
    Complete,
    Effective,
    Ineffective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegAssessment {
    pub class: SegClass,
    pub q_hat: usize,
    pub q_true: usize,
    /// `f(l)` for each true group.
    pub matching: Vec<usize>,
    /// `D²` between each true group and its match.
    pub d2: Vec<f64>,
    pub max_e: Option<f64>,
    pub avg_e: Option<f64>,
}

impl SegAssessment {
    pub fn effective(&self) -> bool {
        self.class != SegClass::Ineffective
    }
}

/// Compares an estimated segmentation with the true structure, using the
/// spans of `V̂^{-1/2} Ǎ_l` as the true loading spaces.
pub fn classify_segmentation(truth: &OracleTruth, seg: &Segmentation) -> Result<SegAssessment> {
    let p = seg.p();
    if truth.a_check.nrows() != p {
        return Err(FtsError::DimensionMismatch("truth and segmentation differ in p".into()));
    }
    let q = truth.q();
    let q_hat = seg.q_hat();
    let truth_spaces: Vec<DMatrix<f64>> = (0..q)
        .map(|l| orthonormalize_columns(&truth.canonical_block(&seg.normalizer, l)))
        .collect();
    let est_spaces: Vec<DMatrix<f64>> = (0..q_hat).map(|j| seg.block(j)).collect();
    let mut matching = Vec::with_capacity(q);
    let mut d2 = Vec::with_capacity(q);
    for t in &truth_spaces {
        let mut best = (0, f64::INFINITY);
        for (j, e) in est_spaces.iter().enumerate() {
            let d = subspace_d(t, e)?.powi(2);
            if d < best.1 {
                best = (j, d);
            }
        }
        matching.push(best.0);
        d2.push(best.1);
    }
    let sizes_match = (0..q_hat).all(|j| {
        let claimed: usize = (0..q).filter(|&l| matching[l] == j).map(|l| truth_spaces[l].ncols()).sum();
        claimed == est_spaces[j].ncols()
    });
    let effective = q_hat > 1 && q_hat <= q && sizes_match;
    let class = if !effective {
        SegClass::Ineffective
    } else if q_hat == q {
        SegClass::Complete
    } else {
        SegClass::Effective
    };
    let (max_e, avg_e) = if class == SegClass::Complete {
        (
            Some(d2.iter().copied().fold(0.0, f64::max)),
            Some(d2.iter().sum::<f64>() / q as f64),
        )
    } else {
        (None, None)
    };
    Ok(SegAssessment {
        class,
        q_hat,
        q_true: q,
        matching,
        d2,
        max_e,
        avg_e,
    })
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let count = values.len();
        if count == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, sd, count })
    }

    /// `mean(sd)` with three decimals.
    pub fn formatted(&self) -> String {
        format!("{:.3}({:.3})", self.mean, self.sd)
    }
}

/// Segmentation frequencies over replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegFrequencies {
    pub runs: usize,
    /// Complete segmentations (`q̂ = q`).
    pub complete: f64,
    /// Effective segmentations with `q̂ ≥ q − 1`.
    pub near_complete: f64,
    /// All effective segmentations.
    pub effective: f64,
    pub max_e: Option<Summary>,
    pub avg_e: Option<Summary>,
}

pub fn seg_frequencies(assessments: &[SegAssessment]) -> SegFrequencies {
    let runs = assessments.len();
    let frac = |pred: &dyn Fn(&SegAssessment) -> bool| {
        if runs == 0 {
            0.0
        } else {
            assessments.iter().filter(|a| pred(a)).count() as f64 / runs as f64
        }
    };
    let complete = frac(&|a| a.class == SegClass::Complete);
    let near_complete = frac(&|a| a.effective() && a.q_hat + 1 >= a.q_true);
    let effective = frac(&|a| a.effective());
    let max_e: Vec<f64> = assessments.iter().filter_map(|a| a.max_e).collect();
    let avg_e: Vec<f64> = assessments.iter().filter_map(|a| a.avg_e).collect();
    SegFrequencies {
        runs,
        complete,
        near_complete,
        effective,
        max_e: Summary::of(&max_e),
        avg_e: Summary::of(&avg_e),
    }
}

/// `MSPE / MSPE_oracle`.
pub fn relative_mspe(mspe: f64, oracle_mspe: f64) -> Result<f64> {
    if !(oracle_mspe > 0.0) {
        return Err(FtsError::InvalidParameter(format!("oracle MSPE must be positive, got {oracle_mspe}")));
    }
    Ok(mspe / oracle_mspe)
}
