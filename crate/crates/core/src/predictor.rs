//! Pluggable per-view-pair surface-probability predictors.
//!
//! The default predictor scores each voxel by the zero-mean normalized
//! cross-correlation of the two grayscale CVC windows around it, mapped
//! to [0,1] via p = ((z+1)/2)^η.

use thiserror::Error;

use crate::cvc::{cvc_gray, CvcVolume};

const VAR_EPS: f64 = 1e-20;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("CVC geometry mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown predictor kind \"{0}\"")]
    UnknownPredictor(String),
}

/// Per-view-pair per-voxel surface confidence in [0,1].
#[derive(Debug, Clone)]
pub struct ProbabilityCube {
    pub cube_index: [i64; 3],
    pub pair: (usize, usize),
    pub s: usize,
    pub p: Vec<f64>,
    /// True where both CVCs are valid at the voxel.
    pub valid: Vec<bool>,
}

/// Predictor selection plus its window size K (odd) and sharpness η.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    pub kind: String,
    pub window: usize,
    pub sharpness: f64,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec {
            kind: "zncc".into(),
            window: 3,
            sharpness: 2.0,
        }
    }
}

pub trait PairPredictor: Send + Sync {
    fn predict(
        &self,
        cvc_i: &CvcVolume,
        cvc_j: &CvcVolume,
        spec: &PredictorSpec,
    ) -> Result<ProbabilityCube, PredictorError>;
}

fn check_compatible(a: &CvcVolume, b: &CvcVolume) -> Result<(), PredictorError> {
    if a.cube_index != b.cube_index {
        return Err(PredictorError::ShapeMismatch(format!(
            "cube indices differ: {:?} vs {:?}",
            a.cube_index, b.cube_index
        )));
    }
    if a.s != b.s {
        return Err(PredictorError::ShapeMismatch(format!(
            "cube sides differ: {} vs {}",
            a.s, b.s
        )));
    }
    Ok(())
}

/// Windowed masked ZNCC photo-consistency.
pub struct ZnccPredictor;

impl PairPredictor for ZnccPredictor {
    fn predict(
        &self,
        cvc_i: &CvcVolume,
        cvc_j: &CvcVolume,
        spec: &PredictorSpec,
    ) -> Result<ProbabilityCube, PredictorError> {
        check_compatible(cvc_i, cvc_j)?;
        if spec.window.is_multiple_of(2) || spec.window == 0 {
            return Err(PredictorError::ShapeMismatch(format!(
                "window must be odd and positive, got {}",
                spec.window
            )));
        }
        let s = cvc_i.s;
        let gi = cvc_gray(cvc_i);
        let gj = cvc_gray(cvc_j);
        let joint: Vec<bool> = cvc_i
            .valid
            .iter()
            .zip(&cvc_j.valid)
            .map(|(&a, &b)| a && b)
            .collect();

        let k = spec.window as i64;
        let half = k / 2;
        let min_support = (spec.window * spec.window * spec.window).div_ceil(2);
        let eta = spec.sharpness;

        let mut p = vec![0.0; s * s * s];
        let lin = |i: usize, j: usize, kk: usize| (i * s + j) * s + kk;

        for vi in 0..s {
            for vj in 0..s {
                for vk in 0..s {
                    let idx = lin(vi, vj, vk);
                    if !joint[idx] {
                        continue;
                    }
                    // masked window statistics over jointly-valid voxels
                    let mut n = 0usize;
                    let mut si = 0.0;
                    let mut sj = 0.0;
                    let mut sii = 0.0;
                    let mut sjj = 0.0;
                    let mut sij = 0.0;
                    for di in -half..=half {
                        let wi = vi as i64 + di;
                        if wi < 0 || wi >= s as i64 {
                            continue;
                        }
                        for dj in -half..=half {
                            let wj = vj as i64 + dj;
                            if wj < 0 || wj >= s as i64 {
                                continue;
                            }
                            for dk in -half..=half {
                                let wk = vk as i64 + dk;
                                if wk < 0 || wk >= s as i64 {
                                    continue;
                                }
                                let w = lin(wi as usize, wj as usize, wk as usize);
                                if !joint[w] {
                                    continue;
                                }
                                let a = gi[w];
                                let b = gj[w];
                                n += 1;
                                si += a;
                                sj += b;
                                sii += a * a;
                                sjj += b * b;
                                sij += a * b;
                            }
                        }
                    }
                    if n < min_support {
                        continue;
                    }
                    let nf = n as f64;
                    let mi = si / nf;
                    let mj = sj / nf;
                    let cov = sij / nf - mi * mj;
                    let var_i = sii / nf - mi * mi;
                    let var_j = sjj / nf - mj * mj;
                    // zero-variance windows are uninformative: z = 0
                    let z = if var_i < VAR_EPS || var_j < VAR_EPS {
                        0.0
                    } else {
                        (cov / (var_i * var_j).sqrt()).clamp(-1.0, 1.0)
                    };
                    p[idx] = ((z + 1.0) / 2.0).powf(eta);
                }
            }
        }

        Ok(ProbabilityCube {
            cube_index: cvc_i.cube_index,
            pair: (cvc_i.view_id, cvc_j.view_id),
            s,
            p,
            valid: joint,
        })
    }
}

/// Test stub: p = 0.5 wherever both CVCs are valid.
pub struct ConstantHalfPredictor;

impl PairPredictor for ConstantHalfPredictor {
    fn predict(
        &self,
        cvc_i: &CvcVolume,
        cvc_j: &CvcVolume,
        _spec: &PredictorSpec,
    ) -> Result<ProbabilityCube, PredictorError> {
        check_compatible(cvc_i, cvc_j)?;
        let joint: Vec<bool> = cvc_i
            .valid
            .iter()
            .zip(&cvc_j.valid)
            .map(|(&a, &b)| a && b)
            .collect();
        let p = joint.iter().map(|&v| if v { 0.5 } else { 0.0 }).collect();
        Ok(ProbabilityCube {
            cube_index: cvc_i.cube_index,
            pair: (cvc_i.view_id, cvc_j.view_id),
            s: cvc_i.s,
            p,
            valid: joint,
        })
    }
}

/// Look up a predictor implementation by its configuration name.
pub fn predictor_registry_lookup(kind: &str) -> Result<Box<dyn PairPredictor>, PredictorError> {
    match kind {
        "zncc" => Ok(Box::new(ZnccPredictor)),
        "constant-half" => Ok(Box::new(ConstantHalfPredictor)),
        other => Err(PredictorError::UnknownPredictor(other.into())),
    }
}

/// Predict one probability cube using the predictor named in `spec`.
pub fn predict_pair(
    cvc_i: &CvcVolume,
    cvc_j: &CvcVolume,
    spec: &PredictorSpec,
) -> Result<ProbabilityCube, PredictorError> {
    predictor_registry_lookup(&spec.kind)?.predict(cvc_i, cvc_j, spec)
}
