//! Trace in, metrics out: detect → seed → fit → metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{detect_resonances, ExtractError, ResonanceCandidate, DEFAULT_THRESHOLD_DB};
use crate::fitkernel::{select_branch_count, FitError, FitOptions, FitResult};
use crate::mbvd::{metrics_from_model, ModelError, ResonatorMetrics};
use crate::netparams::ComplexTrace;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub threshold_db: f64,
    pub fit: FitOptions,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            threshold_db: DEFAULT_THRESHOLD_DB,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub candidates: Vec<ResonanceCandidate>,
    pub fit: FitResult,
    pub metrics: ResonatorMetrics,
}

/// Full analysis of a device admittance trace.
pub fn analyze(trace: &ComplexTrace, options: &AnalysisOptions) -> Result<Analysis, AnalysisError> {
    let candidates = detect_resonances(trace, options.threshold_db)?;
    if candidates.is_empty() {
        return Err(ExtractError::NoCandidates.into());
    }
    let fit = select_branch_count(trace, &candidates, &options.fit)?;
    let metrics = metrics_from_model(&fit.model, &trace.freqs)?;
    Ok(Analysis {
        candidates,
        fit,
        metrics,
    })
}
