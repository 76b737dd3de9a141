//! Ordered trajectory records produced by samplers or the closed form.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub t: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub state: DVector<f64>,
    pub denoised: Option<DVector<f64>>,
}

/// How the first part of a trajectory was replaced by the closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipInfo {
    pub mode: String,
    pub sigma_skip: f64,
    /// Grid steps replaced by the closed form (grid-aligned mode only).
    pub steps_skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub sampler: String,
    pub nfe: usize,
    pub seed: Option<u64>,
    pub skip: Option<SkipInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(sampler: &str) -> Self {
        Self {
            steps: Vec::new(),
            meta: TrajectoryMeta {
                sampler: sampler.to_string(),
                ..Default::default()
            },
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.steps.first().map_or(0, |s| s.state.len())
    }

    pub fn first(&self) -> Option<&TrajectoryStep> {
        self.steps.first()
    }

    pub fn last(&self) -> Option<&TrajectoryStep> {
        self.steps.last()
    }

    /// Final state.
    pub fn endpoint(&self) -> Option<&DVector<f64>> {
        self.steps.last().map(|s| &s.state)
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.sigma).collect()
    }

    pub fn push(&mut self, t: f64, sigma: f64, alpha: f64, state: DVector<f64>, denoised: Option<DVector<f64>>) {
        self.steps.push(TrajectoryStep {
            t,
            sigma,
            alpha,
            state,
            denoised,
        });
    }

    /// Noise levels strictly decreasing along the records.
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::EmptyInput);
        }
        if self.steps.windows(2).any(|w| w[1].sigma >= w[0].sigma) {
            return Err(Error::InvalidData("trajectory noise levels must strictly decrease".into()));
        }
        let d = self.dim();
        if self.steps.iter().any(|s| s.state.len() != d) {
            return Err(Error::InvalidData("trajectory states differ in dimension".into()));
        }
        Ok(())
    }
}
