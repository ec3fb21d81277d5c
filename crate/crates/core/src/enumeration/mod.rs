//! No-good-cut enumeration, the uniform rule, greedy covers, and brute-force
//! reference rules over explicit pools.

mod oracle;

pub use oracle::{brute_force_maximin_value, brute_force_rule, BruteRule};

use std::time::Instant;

use crate::error::{FairError, Result};
use crate::model::{
    Constraint, IlpInstance, Lottery, OptimalSet, SolutionPool, Solver, VarRef,
};
use crate::report::RuleReport;

pub const DEFAULT_CAP: usize = 1000;

/// Row excluding exactly the 0/1 agent vector `x`:
/// `sum_{x_i = 0} x_i + sum_{x_i = 1} (1 - x_i) >= 1`.
pub fn no_good_cut(x: &[f64]) -> Constraint {
    let ones = x.iter().filter(|&&v| v > 0.5).count() as f64;
    let coeffs = x
        .iter()
        .enumerate()
        .map(|(i, &v)| (VarRef::X(i), if v > 0.5 { -1.0 } else { 1.0 }));
    Constraint::ge(coeffs, 1.0 - ones)
}

/// Enumerates distinct agent vectors of the (near-)optimal set until the
/// instance runs dry or `cap` solutions are found.
pub fn enumerate_optimal(solver: &mut Solver, set: &OptimalSet, cap: usize) -> Result<SolutionPool> {
    if !set.instance.is_dichotomous() {
        return Err(FairError::NotDichotomous);
    }
    if cap == 0 {
        return Err(FairError::Config("enumeration cap must be at least 1".into()));
    }
    let objective = set.instance.objective();
    let mut pool = SolutionPool::new(set.z_star);
    let mut current = set.bounded().clone();
    loop {
        match solver.solve_with(&current, &objective, None) {
            Ok((sol, _)) => {
                let cut = no_good_cut(&sol.x);
                pool.insert(sol);
                if pool.len() >= cap {
                    // complete only if nothing else remains
                    pool.complete = false;
                    let probe = current.with_rows([cut])?;
                    if let Err(FairError::Infeasible) = solver.solve_with(&probe, &objective, None) {
                        pool.complete = true;
                    }
                    return Ok(pool);
                }
                current = current.with_rows([cut])?;
            }
            Err(FairError::Infeasible) => {
                pool.complete = true;
                return Ok(pool);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Equal weight on every pool entry.
pub fn uniform_rule(pool: &SolutionPool) -> Result<RuleReport> {
    let start = Instant::now();
    if pool.is_empty() {
        return Err(FairError::EmptyPool);
    }
    let lottery = Lottery::uniform(pool.len());
    let d = lottery.mix(pool)?;
    let mut report = RuleReport::new("uniform", d, pool.clone(), Some(lottery));
    report.approximate = !pool.complete;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// A pool in which every agent of `agents` is selected at least once.
///
/// Each step asks for an optimal solution selecting at least one agent not yet
/// covered, maximizing how many it selects.
pub fn greedy_cover(solver: &mut Solver, set: &OptimalSet, agents: &[usize]) -> Result<SolutionPool> {
    let n = set.n_agents();
    let mut pool = SolutionPool::new(set.z_star);
    let mut uncovered: Vec<usize> = agents.to_vec();
    while !uncovered.is_empty() {
        let row = Constraint::ge(uncovered.iter().map(|&i| (VarRef::X(i), 1.0)), 1.0);
        let inst = set.restricted([row])?;
        let mut w = vec![0.0; n];
        for &i in &uncovered {
            w[i] = 1.0;
        }
        let objective = crate::model::LinearObjective {
            agent: w,
            aux: vec![0.0; inst.n_aux()],
            constant: 0.0,
            maximize: true,
        };
        let sol = match solver.solve_with(&inst, &objective, None) {
            Ok((sol, _)) => sol,
            Err(FairError::Infeasible) => break,
            Err(e) => return Err(e),
        };
        uncovered.retain(|&i| sol.x[i] < 0.5);
        pool.insert(sol);
    }
    Ok(pool)
}

/// An instance whose optimal set is exactly `outcomes`: zero objective and one
/// no-good cut for every other 0/1 vector.
pub fn instance_from_outcomes(n: usize, outcomes: &[Vec<f64>]) -> Result<IlpInstance> {
    if n > 16 {
        return Err(FairError::TooLargeForExact { agents: n, limit: 16 });
    }
    let keep: std::collections::HashSet<Vec<i64>> = outcomes.iter().map(|x| crate::model::x_key(x)).collect();
    let mut rows = Vec::new();
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
        if !keep.contains(&crate::model::x_key(&x)) {
            rows.push(no_good_cut(&x));
        }
    }
    IlpInstance::binary(vec![0.0; n], rows)
}

/// Y/N/M read off a complete pool.
pub fn partition_from_pool(pool: &SolutionPool) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let n = pool.n_agents().ok_or(FairError::EmptyPool)?;
    let (mut yes, mut no, mut maybe) = (vec![], vec![], vec![]);
    for i in 0..n {
        let ones = pool.xs().filter(|x| x[i] > 0.5).count();
        if ones == pool.len() {
            yes.push(i);
        } else if ones == 0 {
            no.push(i);
        } else {
            maybe.push(i);
        }
    }
    Ok((yes, no, maybe))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SolverConfig;

    fn knapsack(v: Vec<f64>, cap: f64) -> IlpInstance {
        IlpInstance::binary(
            v,
            vec![Constraint::le(
                [(VarRef::X(0), 4.0), (VarRef::X(1), 2.5), (VarRef::X(2), 2.5), (VarRef::X(3), 2.5)],
                cap,
            )],
        )
        .unwrap()
    }

    #[test]
    fn cut_excludes_only_its_vector() {
        let cut = no_good_cut(&[1.0, 0.0, 1.0]);
        for mask in 0..8u32 {
            let x: Vec<f64> = (0..3).map(|i| ((mask >> i) & 1) as f64).collect();
            assert_eq!(cut.is_satisfied(&x, &[], 1e-9), mask != 0b101);
        }
    }

    #[test]
    fn example1_has_three() {
        let mut s = Solver::new(SolverConfig::default());
        let set = OptimalSet::exact(knapsack(vec![4.0, 3.0, 1.0, 1.0], 6.0), 4.0).unwrap();
        let pool = enumerate_optimal(&mut s, &set, DEFAULT_CAP).unwrap();
        assert_eq!(pool.len(), 3);
        assert!(pool.complete);
        let capped = enumerate_optimal(&mut s, &set, 2).unwrap();
        assert_eq!(capped.len(), 2);
        assert!(!capped.complete);
    }

    #[test]
    fn intro_has_four() {
        let mut s = Solver::new(SolverConfig::default());
        let row = Constraint::le((0..4).map(|i| (VarRef::X(i), if i == 0 { 2.0 } else { 1.0 })), 3.0);
        let inst = IlpInstance::binary(vec![2.0, 1.0, 1.0, 1.0], vec![row]).unwrap();
        let set = OptimalSet::exact(inst, 3.0).unwrap();
        let pool = enumerate_optimal(&mut s, &set, DEFAULT_CAP).unwrap();
        assert!(pool.complete);
        assert_eq!(pool.len(), 4);
    }

    #[test]
    fn uniform_ifs_pool() {
        let pool = SolutionPool::from_xs(
            [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]],
            0.0,
            true,
        );
        let r = uniform_rule(&pool).unwrap();
        assert_eq!(r.distribution.0, vec![0.25, 0.5, 0.5]);
        assert!(!r.approximate);
        assert!(uniform_rule(&SolutionPool::new(0.0)).is_err());
    }

    #[test]
    fn outcome_instance_reproduces_pool() {
        let outcomes = vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        let inst = instance_from_outcomes(3, &outcomes).unwrap();
        let mut s = Solver::new(SolverConfig::default());
        let set = OptimalSet::exact(inst, 0.0).unwrap();
        let pool = enumerate_optimal(&mut s, &set, 100).unwrap();
        assert_eq!(pool.len(), 3);
        for x in &outcomes {
            assert!(pool.contains_x(x));
        }
        // a greedy cover needs only two of the three solutions
        let cover = greedy_cover(&mut s, &set, &[0, 1, 2]).unwrap();
        assert_eq!(cover.len(), 2);
    }

    #[test]
    fn empty_cover() {
        let mut s = Solver::new(SolverConfig::default());
        let set = OptimalSet::exact(knapsack(vec![4.0, 3.0, 1.0, 1.0], 6.0), 4.0).unwrap();
        let before = s.stats.mip_calls;
        assert!(greedy_cover(&mut s, &set, &[]).unwrap().is_empty());
        assert_eq!(s.stats.mip_calls, before);
    }
}
