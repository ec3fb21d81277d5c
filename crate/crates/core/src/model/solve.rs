use std::time::Duration;

use crate::backend::{Backend, HighsBackend, LinearProgram, LpSolution, SolveOptions};
use crate::error::{FairError, Result};

use super::instance::{Constraint, IlpInstance, LinearObjective, Relation};
use super::solution::Solution;

/// Tolerances and limits shared by every solver call.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Feasibility/optimality tolerance.
    pub omega: f64,
    pub time_limit: Option<Duration>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { omega: 1e-5, time_limit: None, seed: 0 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(FairError::Config(format!("omega must lie in (0, 1), got {}", self.omega)));
        }
        Ok(())
    }
}

/// Admits solutions up to a fraction `epsilon` worse than the optimum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NearOptConfig {
    pub epsilon: f64,
    /// Extra absolute slack, used when the optimum is nonpositive.
    pub absolute_slack: f64,
}

impl NearOptConfig {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(FairError::InvalidEpsilon(self.epsilon));
        }
        if !(self.absolute_slack >= 0.0) {
            return Err(FairError::Config(format!(
                "absolute_slack must be nonnegative, got {}",
                self.absolute_slack
            )));
        }
        Ok(())
    }

    fn is_exact(&self) -> bool {
        self.epsilon == 0.0 && self.absolute_slack == 0.0
    }
}

/// The row that restricts an instance to its (near-)optimal set.
pub fn optimality_row(instance: &IlpInstance, z_star: f64, near: &NearOptConfig) -> Result<Constraint> {
    near.validate()?;
    if near.is_exact() {
        return Ok(instance.objective_row(Relation::Eq, z_star));
    }
    let bound = if z_star > 0.0 {
        (1.0 - near.epsilon) * z_star
    } else {
        z_star - near.epsilon * z_star.abs() - near.absolute_slack
    };
    Ok(instance.objective_row(Relation::Ge, bound))
}

/// Copy of `instance` with one extra row enforcing membership in the near-optimal set.
pub fn with_optimality_bound(instance: &IlpInstance, z_star: f64, near: &NearOptConfig) -> Result<IlpInstance> {
    instance.with_rows([optimality_row(instance, z_star, near)?])
}

/// An instance together with its verified optimum and the bounded copy every
/// downstream solve works on.
#[derive(Clone, Debug)]
pub struct OptimalSet {
    pub instance: IlpInstance,
    pub z_star: f64,
    pub near: NearOptConfig,
    bounded: IlpInstance,
}

impl OptimalSet {
    pub fn new(instance: IlpInstance, z_star: f64, near: NearOptConfig) -> Result<Self> {
        let bounded = with_optimality_bound(&instance, z_star, &near)?;
        Ok(Self { instance, z_star, near, bounded })
    }

    pub fn exact(instance: IlpInstance, z_star: f64) -> Result<Self> {
        Self::new(instance, z_star, NearOptConfig::exact())
    }

    /// Solves `instance` and wraps it with its optimum.
    pub fn solve(solver: &mut Solver, instance: IlpInstance, near: NearOptConfig) -> Result<Self> {
        let (_, z_star) = solve_optimal(solver, &instance)?;
        Self::new(instance, z_star, near)
    }

    pub fn bounded(&self) -> &IlpInstance {
        &self.bounded
    }

    pub fn n_agents(&self) -> usize {
        self.instance.n_agents()
    }

    /// The bounded instance with extra rows.
    pub fn restricted(&self, rows: impl IntoIterator<Item = Constraint>) -> Result<IlpInstance> {
        self.bounded.with_rows(rows)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub mip_calls: usize,
    pub lp_calls: usize,
}

/// A backend handle plus configuration. Confined to one thread.
pub struct Solver {
    backend: Box<dyn Backend>,
    pub config: SolverConfig,
    pub stats: SolverStats,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Self {
        Self::with_backend(Box::new(HighsBackend::default()), config)
    }

    pub fn with_backend(backend: Box<dyn Backend>, config: SolverConfig) -> Self {
        Self { backend, config, stats: SolverStats::default() }
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn omega(&self) -> f64 {
        self.config.omega
    }

    fn options(&self) -> SolveOptions {
        SolveOptions { time_limit: self.config.time_limit, seed: self.config.seed }
    }

    /// Optimizes `objective` over `instance`. The returned solution carries the
    /// instance's own objective value; the second element is the value of
    /// `objective` at that point.
    pub fn solve_with(
        &mut self,
        instance: &IlpInstance,
        objective: &LinearObjective,
        agent_order: Option<&[usize]>,
    ) -> Result<(Solution, f64)> {
        if objective.agent.len() != instance.n_agents() {
            return Err(FairError::DimensionMismatch { expected: instance.n_agents(), got: objective.agent.len() });
        }
        let program = instance.to_program(objective, agent_order);
        self.stats.mip_calls += 1;
        let raw = self.backend.solve_mip(&program, &self.options())?;
        let (x, y) = instance.split_values(&raw.values, agent_order);
        let value = objective.value(&x, &y);
        let obj = instance.objective_value(&x, &y);
        Ok((Solution::new(x, y, obj), value))
    }

    pub fn solve_lp(&mut self, program: &LinearProgram) -> Result<LpSolution> {
        self.stats.lp_calls += 1;
        let opts = self.options();
        self.backend.solve_lp(program, &opts)
    }

    pub fn solve_mip(&mut self, program: &LinearProgram) -> Result<crate::backend::MipSolution> {
        self.stats.mip_calls += 1;
        let opts = self.options();
        self.backend.solve_mip(program, &opts)
    }
}

/// One optimal solution and the optimal value `z*`.
pub fn solve_optimal(solver: &mut Solver, instance: &IlpInstance) -> Result<(Solution, f64)> {
    solver.config.validate()?;
    let (sol, _) = solver.solve_with(instance, &instance.objective(), None)?;
    let z = sol.objective;
    Ok((sol, z))
}

/// Optimizes `sum weights_i x_i + constant` over the (near-)optimal set.
pub fn solve_pricing(
    solver: &mut Solver,
    set: &OptimalSet,
    weights: &[f64],
    constant: f64,
    maximize: bool,
) -> Result<(Solution, f64)> {
    let objective = LinearObjective {
        agent: weights.to_vec(),
        aux: vec![0.0; set.instance.n_aux()],
        constant,
        maximize,
    };
    solver.solve_with(set.bounded(), &objective, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::instance::VarRef;

    fn example1() -> IlpInstance {
        IlpInstance::binary(
            vec![4.0, 3.0, 1.0, 1.0],
            vec![Constraint::le(
                [(VarRef::X(0), 4.0), (VarRef::X(1), 2.5), (VarRef::X(2), 2.5), (VarRef::X(3), 2.5)],
                6.0,
            )],
        )
        .unwrap()
    }

    #[test]
    fn example1_optimum() {
        let mut solver = Solver::new(SolverConfig::default());
        let (sol, z) = solve_optimal(&mut solver, &example1()).unwrap();
        assert_eq!(z, 4.0);
        assert_eq!(sol.objective, 4.0);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let inst = IlpInstance::binary(
            vec![1.0],
            vec![Constraint::ge([(VarRef::X(0), 1.0)], 1.0), Constraint::le([(VarRef::X(0), 1.0)], 0.0)],
        )
        .unwrap();
        let mut solver = Solver::new(SolverConfig::default());
        assert!(matches!(solve_optimal(&mut solver, &inst), Err(FairError::Infeasible)));
    }

    #[test]
    fn bound_rows() {
        let inst = example1();
        let row = optimality_row(&inst, 4.0, &NearOptConfig::exact()).unwrap();
        assert_eq!((row.rel, row.rhs), (Relation::Eq, 4.0));
        let row = optimality_row(&inst, 4.0, &NearOptConfig { epsilon: 0.25, absolute_slack: 0.0 }).unwrap();
        assert_eq!((row.rel, row.rhs), (Relation::Ge, 3.0));
        let row = optimality_row(&inst, -10.0, &NearOptConfig { epsilon: 0.05, absolute_slack: 0.0 }).unwrap();
        assert_eq!((row.rel, row.rhs), (Relation::Ge, -10.5));
        assert!(matches!(
            optimality_row(&inst, 4.0, &NearOptConfig { epsilon: 1.0, absolute_slack: 0.0 }),
            Err(FairError::InvalidEpsilon(_))
        ));
    }

    #[test]
    fn pricing_examples() {
        let mut solver = Solver::new(SolverConfig::default());
        let set = OptimalSet::exact(example1(), 4.0).unwrap();
        let (sol, val) = solve_pricing(&mut solver, &set, &[1.0, 0.0, 0.0, 0.0], 0.0, true).unwrap();
        assert_eq!(sol.x, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(val, 1.0);
        let (sol, val) = solve_pricing(&mut solver, &set, &[0.0, 1.0, 1.0, 1.0], 0.0, true).unwrap();
        assert_eq!(val, 2.0);
        assert_eq!(sol.x[1], 1.0);
        let (_, val) = solve_pricing(&mut solver, &set, &[0.0; 4], -0.7, false).unwrap();
        assert_eq!(val, -0.7);
    }
}
