use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};

/// One feasible point `(x, y)` with its objective value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
}

impl Solution {
    pub fn new(x: Vec<f64>, y: Vec<f64>, objective: f64) -> Self {
        Self { x, y, objective }
    }

    /// Agent-only solution, used for pools built directly from x-vectors.
    pub fn from_x(x: Vec<f64>, objective: f64) -> Self {
        Self { x, y: vec![], objective }
    }

    pub(crate) fn key(&self) -> Vec<i64> {
        x_key(&self.x)
    }
}

/// Deduplication key: x rounded to nine decimals.
pub(crate) fn x_key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v * 1e9).round() as i64).collect()
}

/// A set of optimal (or near-optimal) solutions with distinct x-projections.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SolutionPool {
    solutions: Vec<Solution>,
    pub z_star: f64,
    /// True only when the pool is known to contain every x-projection.
    pub complete: bool,
    #[serde(skip)]
    keys: HashSet<Vec<i64>>,
}

impl PartialEq for SolutionPool {
    fn eq(&self, other: &Self) -> bool {
        self.solutions == other.solutions && self.z_star == other.z_star && self.complete == other.complete
    }
}

impl SolutionPool {
    pub fn new(z_star: f64) -> Self {
        Self { z_star, ..Default::default() }
    }

    /// Builds a pool from x-vectors; duplicates are dropped.
    pub fn from_xs(xs: impl IntoIterator<Item = Vec<f64>>, z_star: f64, complete: bool) -> Self {
        let mut pool = Self::new(z_star);
        for x in xs {
            pool.insert(Solution::from_x(x, z_star));
        }
        pool.complete = complete;
        pool
    }

    /// Inserts unless the x-projection is already present. Returns the index of
    /// the new entry, or `None` for a duplicate.
    pub fn insert(&mut self, solution: Solution) -> Option<usize> {
        if self.keys.insert(solution.key()) {
            self.solutions.push(solution);
            Some(self.solutions.len() - 1)
        } else {
            None
        }
    }

    pub fn contains_x(&self, x: &[f64]) -> bool {
        self.keys.contains(&x_key(x))
    }

    pub fn position_x(&self, x: &[f64]) -> Option<usize> {
        let key = x_key(x);
        if !self.keys.contains(&key) {
            return None;
        }
        self.solutions.iter().position(|s| s.key() == key)
    }

    pub fn solutions(&self) -> &[Solution] {
        &self.solutions
    }

    pub fn get(&self, idx: usize) -> &Solution {
        &self.solutions[idx]
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn n_agents(&self) -> Option<usize> {
        self.solutions.first().map(|s| s.x.len())
    }

    pub fn xs(&self) -> impl Iterator<Item = &[f64]> {
        self.solutions.iter().map(|s| s.x.as_slice())
    }

    /// Sub-pool with the given entries, in the given order.
    pub fn select(&self, idx: &[usize]) -> SolutionPool {
        let mut out = SolutionPool::new(self.z_star);
        for &i in idx {
            out.insert(self.solutions[i].clone());
        }
        out
    }

    /// Same solutions with every x permuted: new `x[perm[i]]` = old `x[i]`.
    pub fn relabel_agents(&self, perm: &[usize]) -> SolutionPool {
        let mut out = SolutionPool::new(self.z_star);
        for s in &self.solutions {
            let mut x = vec![0.0; s.x.len()];
            for (i, &p) in perm.iter().enumerate() {
                x[p] = s.x[i];
            }
            out.insert(Solution { x, ..s.clone() });
        }
        out.complete = self.complete;
        out
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.solutions {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R, z_star: f64, complete: bool) -> Result<Self> {
        let mut pool = SolutionPool::new(z_star);
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            pool.insert(serde_json::from_str(&line)?);
        }
        pool.complete = complete;
        Ok(pool)
    }

    #[cfg(test)]
    pub(crate) fn rebuild_keys(&mut self) {
        self.keys = self.solutions.iter().map(Solution::key).collect();
    }
}

pub(crate) fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let mag = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - mag);
    let r = (v * scale).round() / scale;
    if r == 0.0 { 0.0 } else { r }
}

fn ser_sig12<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| round_sig(x, 12)))
}

/// Per-agent selection probabilities (or expected utilities in cardinal mode).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution(#[serde(serialize_with = "ser_sig12")] pub Vec<f64>);

/// Weights over the entries of a [`SolutionPool`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lottery(#[serde(serialize_with = "ser_sig12")] pub Vec<f64>);

impl Distribution {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn min_over(&self, agents: &[usize]) -> f64 {
        agents.iter().map(|&i| self.0[i]).fold(f64::INFINITY, f64::min)
    }
}

impl Lottery {
    pub fn uniform(len: usize) -> Self {
        Lottery(vec![1.0 / len as f64; len])
    }

    pub fn support(&self, tol: f64) -> usize {
        self.0.iter().filter(|&&w| w > tol).count()
    }

    /// `sum_s lambda_s x^s`.
    pub fn mix(&self, pool: &SolutionPool) -> Result<Distribution> {
        if self.0.len() != pool.len() {
            return Err(FairError::DimensionMismatch { expected: pool.len(), got: self.0.len() });
        }
        let n = pool.n_agents().ok_or(FairError::EmptyPool)?;
        let mut d = vec![0.0; n];
        for (w, s) in self.0.iter().zip(pool.solutions()) {
            for (di, xi) in d.iter_mut().zip(&s.x) {
                *di += w * xi;
            }
        }
        Ok(Distribution(d))
    }
}

/// True iff `lottery` is a probability vector over `pool` whose mixture is `d`.
pub fn realizes(pool: &SolutionPool, lottery: &Lottery, d: &Distribution, tol: f64) -> Result<bool> {
    if lottery.0.len() != pool.len() {
        return Err(FairError::DimensionMismatch { expected: pool.len(), got: lottery.0.len() });
    }
    if let Some(n) = pool.n_agents() {
        if d.0.len() != n {
            return Err(FairError::DimensionMismatch { expected: n, got: d.0.len() });
        }
    }
    if pool.is_empty() {
        return Ok(false);
    }
    let total: f64 = lottery.0.iter().sum();
    if (total - 1.0).abs() > tol || lottery.0.iter().any(|&w| w < -tol) {
        return Ok(false);
    }
    let mixed = lottery.mix(pool)?;
    Ok(mixed.0.iter().zip(&d.0).all(|(a, b)| (a - b).abs() <= tol))
}

/// Moves the lottery to a vertex of `{lambda >= 0, sum lambda = 1, sum lambda x = d}`.
///
/// Duplicate x-projections are merged first; then, while the supporting
/// columns are affinely dependent, weight is shifted along a null-space
/// direction until some weight hits zero. The result has at most
/// `rank + 1 <= |M| + 1` positive weights, where `M` is the set of agents whose
/// value varies over the pool.
pub fn reduce_support(pool: &SolutionPool, lottery: &Lottery) -> Result<Lottery> {
    if lottery.0.len() != pool.len() {
        return Err(FairError::DimensionMismatch { expected: pool.len(), got: lottery.0.len() });
    }
    let total: f64 = lottery.0.iter().sum();
    if pool.is_empty() || (total - 1.0).abs() > 1e-6 || lottery.0.iter().any(|&w| w < -1e-9) {
        return Err(FairError::NotRealizable(format!("weights sum to {total}")));
    }
    let mut w: Vec<f64> = lottery.0.iter().map(|&v| v.max(0.0)).collect();

    // merge duplicates onto their first occurrence
    let mut first: std::collections::HashMap<Vec<i64>, usize> = Default::default();
    for (s, sol) in pool.solutions().iter().enumerate() {
        let k = sol.key();
        match first.get(&k) {
            Some(&t) => {
                w[t] += w[s];
                w[s] = 0.0;
            }
            None => {
                first.insert(k, s);
            }
        }
    }

    let n = pool.n_agents().unwrap_or(0);
    let varying: Vec<usize> = (0..n)
        .filter(|&i| {
            let v0 = pool.get(0).x[i];
            pool.xs().any(|x| (x[i] - v0).abs() > 1e-9)
        })
        .collect();

    const ZERO: f64 = 1e-13;
    loop {
        let supp: Vec<usize> = (0..w.len()).filter(|&s| w[s] > ZERO).collect();
        if supp.len() <= 1 {
            break;
        }
        // columns [x_M; 1] for the support
        let rows = varying.len() + 1;
        let mut a = nalgebra::DMatrix::<f64>::zeros(rows.max(supp.len()), supp.len());
        for (c, &s) in supp.iter().enumerate() {
            let x = &pool.get(s).x;
            for (r, &i) in varying.iter().enumerate() {
                a[(r, c)] = x[i];
            }
            a[(varying.len(), c)] = 1.0;
        }
        let svd = a.svd(false, true);
        let vt = svd.v_t.as_ref().expect("requested V^T");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let (k, smin) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
        if smin > 1e-10 * smax.max(1.0) {
            break;
        }
        let dir: Vec<f64> = vt.row(k).iter().copied().collect();
        // step until the first weight with a negative direction hits zero
        let mut step = f64::INFINITY;
        let mut hit = 0;
        let sign = if dir.iter().any(|&v| v < -1e-12) { 1.0 } else { -1.0 };
        for (c, &s) in supp.iter().enumerate() {
            let dv = sign * dir[c];
            if dv < -1e-12 {
                let t = w[s] / -dv;
                if t < step {
                    step = t;
                    hit = s;
                }
            }
        }
        if !step.is_finite() {
            break;
        }
        for (c, &s) in supp.iter().enumerate() {
            w[s] = (w[s] + step * sign * dir[c]).max(0.0);
        }
        w[hit] = 0.0;
    }
    for v in w.iter_mut() {
        if *v <= ZERO {
            *v = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(Lottery(w))
}
