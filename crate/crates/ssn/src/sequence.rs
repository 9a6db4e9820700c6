//! Per-video snippet features and actionness scores.

use crate::error::{Result, SsnError};
use crate::intervals::GroundTruthInstance;

/// A video represented as `T` snippet feature vectors of dimension `D`
/// (row-major), plus optional per-snippet actionness scores.
#[derive(Debug, Clone)]
pub struct SnippetSequence {
    features: Vec<f64>,
    num_snippets: usize,
    dim: usize,
    actionness: Option<Vec<f64>>,
}

impl SnippetSequence {
    pub fn new(features: Vec<f64>, num_snippets: usize, dim: usize) -> Result<Self> {
        if num_snippets == 0 || dim == 0 || features.len() != num_snippets * dim {
            return Err(SsnError::DimensionMismatch {
                what: "snippet feature matrix".into(),
                expected: num_snippets * dim,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SsnError::InvalidConfig(
                "snippet features must be finite".into(),
            ));
        }
        Ok(Self {
            features,
            num_snippets,
            dim,
            actionness: None,
        })
    }

    pub fn with_actionness(mut self, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != self.num_snippets {
            return Err(SsnError::DimensionMismatch {
                what: "actionness scores".into(),
                expected: self.num_snippets,
                got: scores.len(),
            });
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(SsnError::InvalidConfig(
                "actionness scores must lie in [0, 1]".into(),
            ));
        }
        self.actionness = Some(scores);
        Ok(self)
    }

    pub fn num_snippets(&self) -> usize {
        self.num_snippets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.features[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn actionness(&self) -> Option<&[f64]> {
        self.actionness.as_deref()
    }
}

/// A video with its features and ground-truth instances, as loaded from a
/// dataset manifest or produced by the synthetic generator.
#[derive(Debug, Clone)]
pub struct VideoData {
    pub id: String,
    pub seq: SnippetSequence,
    pub instances: Vec<GroundTruthInstance>,
}
