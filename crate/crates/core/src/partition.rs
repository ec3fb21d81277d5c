//! Always/never/sometimes-selected agents, and utopia/dystopia bounds.

use serde::Serialize;

use crate::error::{FairError, Result};
use crate::model::{solve_pricing, Constraint, OptimalSet, Solution, SolutionPool, Solver};

#[derive(Clone, Debug, Serialize)]
pub struct AgentPartition {
    /// Selected in every optimal solution.
    pub yes: Vec<usize>,
    /// Selected in none.
    pub no: Vec<usize>,
    /// Selected in some but not all.
    pub maybe: Vec<usize>,
    pub solver_calls: usize,
    #[serde(skip)]
    pub witness_pool: SolutionPool,
}

/// Per-agent best and worst value over the optimal set.
#[derive(Clone, Debug, Serialize)]
pub struct Bounds {
    pub utopia: Vec<f64>,
    pub dystopia: Vec<f64>,
    /// Agents with `utopia > dystopia`.
    pub varying: Vec<usize>,
    pub solver_calls: usize,
    #[serde(skip)]
    pub witness_pool: SolutionPool,
}

impl Bounds {
    pub fn range(&self, i: usize) -> f64 {
        self.utopia[i] - self.dystopia[i]
    }

    /// Bounds of a dichotomous instance, read off a partition.
    pub fn from_partition(p: &AgentPartition, n: usize) -> Self {
        let mut utopia = vec![0.0; n];
        let mut dystopia = vec![0.0; n];
        for &i in &p.yes {
            utopia[i] = 1.0;
            dystopia[i] = 1.0;
        }
        for &i in &p.maybe {
            utopia[i] = 1.0;
        }
        Self {
            utopia,
            dystopia,
            varying: p.maybe.clone(),
            solver_calls: p.solver_calls,
            witness_pool: p.witness_pool.clone(),
        }
    }

    /// Bounds directly from a complete pool.
    pub fn from_pool(pool: &SolutionPool, tol: f64) -> Result<Self> {
        let n = pool.n_agents().ok_or(FairError::EmptyPool)?;
        let mut utopia = vec![f64::NEG_INFINITY; n];
        let mut dystopia = vec![f64::INFINITY; n];
        for x in pool.xs() {
            for i in 0..n {
                utopia[i] = utopia[i].max(x[i]);
                dystopia[i] = dystopia[i].min(x[i]);
            }
        }
        let varying = (0..n).filter(|&i| utopia[i] - dystopia[i] > tol).collect();
        Ok(Self { utopia, dystopia, varying, solver_calls: 0, witness_pool: pool.clone() })
    }
}

/// Classifies every agent with at most `n + 1` solves.
///
/// After one optimal solution `x*`, agent `i` is probed by forcing
/// `x_i = 1 - x*_i` on the bounded instance. Probes are skipped for agents
/// whose two values already appear among earlier witnesses.
pub fn partition_agents(solver: &mut Solver, set: &OptimalSet) -> Result<AgentPartition> {
    if !set.instance.is_dichotomous() {
        return Err(FairError::NotDichotomous);
    }
    let n = set.n_agents();
    let objective = set.instance.objective();
    let mut pool = SolutionPool::new(set.z_star);
    let mut seen = vec![[false; 2]; n];
    let record = |pool: &mut SolutionPool, sol: Solution, seen: &mut Vec<[bool; 2]>| {
        for (i, &v) in sol.x.iter().enumerate() {
            seen[i][(v > 0.5) as usize] = true;
        }
        pool.insert(sol);
    };

    let (first, _) = solver.solve_with(set.bounded(), &objective, None)?;
    let x_star = first.x.clone();
    record(&mut pool, first, &mut seen);
    let mut calls = 1;

    let (mut yes, mut no, mut maybe) = (vec![], vec![], vec![]);
    for i in 0..n {
        if seen[i][0] && seen[i][1] {
            maybe.push(i);
            continue;
        }
        let flipped = 1.0 - x_star[i].round();
        let probe = set.restricted([Constraint::fix_agent(i, flipped)])?;
        calls += 1;
        match solver.solve_with(&probe, &objective, None) {
            Ok((sol, _)) => {
                record(&mut pool, sol, &mut seen);
                maybe.push(i);
            }
            Err(FairError::Infeasible) => {
                if x_star[i] > 0.5 {
                    yes.push(i)
                } else {
                    no.push(i)
                }
            }
            Err(e) => return Err(e),
        }
    }
    log::debug!("partition: |Y|={} |N|={} |M|={} in {calls} solves", yes.len(), no.len(), maybe.len());
    Ok(AgentPartition { yes, no, maybe, solver_calls: calls, witness_pool: pool })
}

/// Utopia and dystopia values of every agent over the bounded instance.
///
/// Dichotomous instances reuse [`partition_agents`]; otherwise each agent
/// costs one maximization and one minimization.
pub fn compute_bounds(solver: &mut Solver, set: &OptimalSet) -> Result<Bounds> {
    let n = set.n_agents();
    if set.instance.is_dichotomous() {
        let p = partition_agents(solver, set)?;
        return Ok(Bounds::from_partition(&p, n));
    }
    let mut pool = SolutionPool::new(set.z_star);
    let mut utopia = vec![0.0; n];
    let mut dystopia = vec![0.0; n];
    let mut calls = 0;
    for i in 0..n {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        let (hi, _) = solve_pricing(solver, set, &w, 0.0, true)?;
        let (lo, _) = solve_pricing(solver, set, &w, 0.0, false)?;
        calls += 2;
        utopia[i] = hi.x[i];
        dystopia[i] = lo.x[i].min(hi.x[i]);
        pool.insert(hi);
        pool.insert(lo);
    }
    let omega = solver.omega();
    let varying = (0..n).filter(|&i| utopia[i] - dystopia[i] > omega).collect();
    Ok(Bounds { utopia, dystopia, varying, solver_calls: calls, witness_pool: pool })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IlpInstance, SolverConfig, VarRef};

    fn solver() -> Solver {
        Solver::new(SolverConfig::default())
    }

    #[test]
    fn example1_all_sometimes() {
        let inst = IlpInstance::binary(
            vec![4.0, 3.0, 1.0, 1.0],
            vec![Constraint::le(
                [(VarRef::X(0), 4.0), (VarRef::X(1), 2.5), (VarRef::X(2), 2.5), (VarRef::X(3), 2.5)],
                6.0,
            )],
        )
        .unwrap();
        let mut s = solver();
        let set = OptimalSet::exact(inst, 4.0).unwrap();
        let p = partition_agents(&mut s, &set).unwrap();
        assert_eq!(p.maybe, vec![0, 1, 2, 3]);
        assert!(p.yes.is_empty() && p.no.is_empty());
        assert!(p.solver_calls <= 5);
        let b = compute_bounds(&mut s, &set).unwrap();
        assert_eq!(b.utopia, vec![1.0; 4]);
        assert_eq!(b.dystopia, vec![0.0; 4]);
    }

    #[test]
    fn forced_variables() {
        // max x1 s.t. x1 = 1, x2 <= 0
        let inst = IlpInstance::binary(
            vec![1.0, 0.0],
            vec![Constraint::eq([(VarRef::X(0), 1.0)], 1.0), Constraint::le([(VarRef::X(1), 1.0)], 0.0)],
        )
        .unwrap();
        let mut s = solver();
        let set = OptimalSet::exact(inst, 1.0).unwrap();
        let p = partition_agents(&mut s, &set).unwrap();
        assert_eq!((p.yes, p.no, p.maybe), (vec![0], vec![1], vec![]));
        assert_eq!(p.solver_calls, 3);
    }
}
