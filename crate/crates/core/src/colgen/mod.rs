//! Column generation over the optimal set: leximin and convex objectives.

mod convex;
mod leximin;

pub use convex::{minimize_convex, ConvexKind, ConvexObjective, ConvexOptions, SmoothConvex};
pub use leximin::{leximin, maximin, ColGenState, LeximinOptions};

use crate::error::{FairError, Result};
use crate::model::SolutionPool;
use crate::partition::Bounds;

/// Affine agent values `a_i = scale_i * (x_i - offset_i)` for the agents in `agents`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentScale {
    pub agents: Vec<usize>,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AgentScale {
    /// `a_i = x_i`.
    pub fn identity(n: usize, agents: &[usize]) -> Self {
        Self { agents: agents.to_vec(), offset: vec![0.0; n], scale: vec![1.0; n] }
    }

    /// `a_i = (x_i - o_i) / (u_i - o_i)`.
    pub fn normalized(bounds: &Bounds) -> Self {
        let scale = (0..bounds.utopia.len())
            .map(|i| if bounds.range(i) > 0.0 { 1.0 / bounds.range(i) } else { 1.0 })
            .collect();
        Self { agents: bounds.varying.clone(), offset: bounds.dystopia.clone(), scale }
    }

    /// `a_i = x_i - o_i`.
    pub fn gains(bounds: &Bounds) -> Self {
        Self {
            agents: bounds.varying.clone(),
            offset: bounds.dystopia.clone(),
            scale: vec![1.0; bounds.utopia.len()],
        }
    }

    pub fn value(&self, i: usize, x: f64) -> f64 {
        self.scale[i] * (x - self.offset[i])
    }

    /// Agent values of one column, in `agents` order.
    pub fn column(&self, x: &[f64]) -> Vec<f64> {
        self.agents.iter().map(|&i| self.value(i, x[i])).collect()
    }

    /// Fails with the first agent that no column lifts above its offset.
    pub fn check_coverage(&self, pool: &SolutionPool, tol: f64) -> Result<()> {
        for &i in &self.agents {
            if !pool.xs().any(|x| self.value(i, x[i]) > tol) {
                return Err(FairError::CoverageError(i));
            }
        }
        Ok(())
    }
}
