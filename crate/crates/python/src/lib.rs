//! Python bindings. Instances travel as model JSON strings, reports come back
//! as JSON strings.

use fairip_core::bench::{prepare, run_rule, Rule, RuleOptions};
use fairip_core::enumeration::enumerate_optimal;
use fairip_core::instances::{build_kidney_ilp, build_tardiness_ilp, gen_kidney, gen_tardiness, KidneyParams};
use fairip_core::model::{solve_optimal, IlpInstance, NearOptConfig, OptimalSet, Solver, SolverConfig};
use fairip_core::partition::partition_agents;
use fairip_core::Result;

fn solver(seed: u64) -> Solver {
    Solver::new(SolverConfig { seed, ..Default::default() })
}

fn near(epsilon: f64) -> NearOptConfig {
    NearOptConfig { epsilon, absolute_slack: 0.0 }
}

/// Optimal value and one optimal agent vector.
pub fn solve_json(instance: &str) -> Result<(f64, Vec<f64>)> {
    let inst = IlpInstance::from_json(instance)?;
    let (sol, z) = solve_optimal(&mut solver(0), &inst)?;
    Ok((z, sol.x))
}

/// `(yes, no, maybe)` agent lists.
pub fn partition_json(instance: &str, epsilon: f64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let mut s = solver(0);
    let set = OptimalSet::solve(&mut s, IlpInstance::from_json(instance)?, near(epsilon))?;
    let p = partition_agents(&mut s, &set)?;
    Ok((p.yes, p.no, p.maybe))
}

pub fn rule_json(instance: &str, name: &str, epsilon: f64, seed: u64, trials: usize, cap: usize) -> Result<String> {
    let rule: Rule = name.parse()?;
    let mut s = solver(seed);
    let prep = prepare(&mut s, IlpInstance::from_json(instance)?, near(epsilon))?;
    let opts = RuleOptions { cap, trials, seed, ..Default::default() };
    Ok(run_rule(&mut s, &prep, rule, &opts)?.to_json()?)
}

/// Agent vectors of the optimal set, and whether the listing is complete.
pub fn enumerate_json(instance: &str, epsilon: f64, cap: usize) -> Result<(Vec<Vec<f64>>, bool)> {
    let mut s = solver(0);
    let set = OptimalSet::solve(&mut s, IlpInstance::from_json(instance)?, near(epsilon))?;
    let pool = enumerate_optimal(&mut s, &set, cap)?;
    Ok((pool.xs().map(|x| x.to_vec()).collect(), pool.complete))
}

pub fn kidney_json(n_pairs: usize, seed: u64) -> Result<String> {
    build_kidney_ilp(&gen_kidney(n_pairs, seed, &KidneyParams::default())?)?.to_json()
}

pub fn tardiness_json(n_jobs: usize, beta: f64, seed: u64) -> Result<String> {
    build_tardiness_ilp(&gen_tardiness(n_jobs, beta, seed)?)?.to_json()
}

#[pyo3::pymodule]
mod fairip {
    use pyo3::exceptions::PyValueError;
    use pyo3::prelude::*;

    fn err(e: fairip_core::FairError) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    /// Optimal value and one optimal agent vector.
    #[pyfunction]
    fn solve(instance: &str) -> PyResult<(f64, Vec<f64>)> {
        super::solve_json(instance).map_err(err)
    }

    /// Agents selected in every, no, or some optimal solutions.
    #[pyfunction]
    #[pyo3(signature = (instance, epsilon = 0.0))]
    fn partition(instance: &str, epsilon: f64) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        super::partition_json(instance, epsilon).map_err(err)
    }

    /// Runs a rule and returns its report as JSON.
    #[pyfunction]
    #[pyo3(signature = (instance, name, epsilon = 0.0, seed = 0, trials = 1000, cap = 1000))]
    fn rule(instance: &str, name: &str, epsilon: f64, seed: u64, trials: usize, cap: usize) -> PyResult<String> {
        super::rule_json(instance, name, epsilon, seed, trials, cap).map_err(err)
    }

    #[pyfunction]
    #[pyo3(signature = (instance, epsilon = 0.0, cap = 1000))]
    fn enumerate(instance: &str, epsilon: f64, cap: usize) -> PyResult<(Vec<Vec<f64>>, bool)> {
        super::enumerate_json(instance, epsilon, cap).map_err(err)
    }

    /// Random kidney exchange instance as model JSON.
    #[pyfunction]
    fn kidney_instance(n_pairs: usize, seed: u64) -> PyResult<String> {
        super::kidney_json(n_pairs, seed).map_err(err)
    }

    /// Random total tardiness instance as model JSON.
    #[pyfunction]
    fn tardiness_instance(n_jobs: usize, beta: f64, seed: u64) -> PyResult<String> {
        super::tardiness_json(n_jobs, beta, seed).map_err(err)
    }
}
