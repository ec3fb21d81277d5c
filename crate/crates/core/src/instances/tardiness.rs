use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{field, records};
use crate::error::{FairError, Result};
use crate::model::{Constraint, Domain, IlpInstance, PreferenceMode, VarRef};

/// Jobs `(p_j, d_j)` on one machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TardinessInstance {
    pub jobs: Vec<(u32, u32)>,
    pub beta: f64,
}

impl TardinessInstance {
    pub fn new(jobs: Vec<(u32, u32)>, beta: f64) -> Result<Self> {
        if jobs.iter().any(|&(p, _)| p == 0) {
            return Err(FairError::InvalidInstance("processing times must be positive".into()));
        }
        Ok(Self { jobs, beta })
    }

    /// Horizon `T = sum p_j`.
    pub fn horizon(&self) -> u32 {
        self.jobs.iter().map(|j| j.0).sum()
    }

    pub fn n_jobs(&self) -> usize {
        self.jobs.len()
    }

    /// One `p_j d_j` line per job.
    pub fn parse(text: &str) -> Result<Self> {
        let mut jobs = Vec::new();
        for (line, rec) in records(text) {
            if rec.len() != 2 {
                return Err(FairError::Parse(format!("line {line}: expected `p d`")));
            }
            jobs.push((field(line, rec[0])?, field(line, rec[1])?));
        }
        if jobs.is_empty() {
            return Err(FairError::Parse("no jobs".into()));
        }
        let total: f64 = jobs.iter().map(|j| j.0 as f64).sum();
        let beta = jobs.iter().map(|j| j.1 as f64).fold(0.0, f64::max) / total;
        Self::new(jobs, beta)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (p, d) in &self.jobs {
            let _ = writeln!(out, "{p} {d}");
        }
        out
    }

    /// Negated tardiness of every job when processed in `order` without idle time.
    pub fn utilities(&self, order: &[usize]) -> Vec<f64> {
        let mut u = vec![0.0; self.jobs.len()];
        let mut t = 0u32;
        for &j in order {
            t += self.jobs[j].0;
            u[j] = -(t.saturating_sub(self.jobs[j].1) as f64);
        }
        u
    }
}

/// `p_j ~ U{1..10}`, `d_j ~ U{0..floor(beta * sum p)}`.
pub fn gen_tardiness(n: usize, beta: f64, seed: u64) -> Result<TardinessInstance> {
    if n == 0 {
        return Err(FairError::Config("at least one job is required".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(FairError::Config(format!("beta must be positive, got {beta}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<u32> = (0..n).map(|_| rng.random_range(1..=10)).collect();
    let max_due = (beta * p.iter().sum::<u32>() as f64).floor() as u32;
    let jobs = p.into_iter().map(|p| (p, rng.random_range(0..=max_due))).collect();
    TardinessInstance::new(jobs, beta)
}

/// Time-indexed formulation with start binaries `y_jt`, `t = 0..T-1`, and
/// agent utilities `x_j = -T_j` in `[-T, 0]`.
pub fn build_tardiness_ilp(inst: &TardinessInstance) -> Result<IlpInstance> {
    let n = inst.n_jobs();
    let horizon = inst.horizon() as usize;
    let y = |j: usize, t: usize| VarRef::Y(j * horizon + t);
    let mut rows = Vec::with_capacity(2 * n + horizon);
    for j in 0..n {
        rows.push(Constraint::eq((0..horizon).map(|t| (y(j, t), 1.0)), 1.0));
    }
    for s in 0..horizon {
        let busy = (0..n).flat_map(|j| {
            let p = inst.jobs[j].0 as usize;
            (s.saturating_sub(p - 1)..=s).map(move |t| (y(j, t), 1.0))
        });
        rows.push(Constraint::le(busy, 1.0));
    }
    for (j, &(p, d)) in inst.jobs.iter().enumerate() {
        let start = (0..horizon).map(|t| (y(j, t), t as f64));
        rows.push(Constraint::le(start.chain([(VarRef::X(j), 1.0)]), d as f64 - p as f64));
    }
    let t = horizon as f64;
    IlpInstance::new(
        vec![1.0; n],
        vec![0.0; n * horizon],
        rows,
        vec![Domain::continuous(-t, 0.0); n],
        vec![Domain::BINARY; n * horizon],
        PreferenceMode::Cardinal,
    )
}
