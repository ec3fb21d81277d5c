//! Solver backend contract.
//!
//! Everything above this module talks to a [`Backend`] through plain
//! [`LinearProgram`] values: a MIP solve returning one optimal point, and an
//! LP solve returning primal values together with row duals. The default
//! implementation wraps HiGHS.

use std::time::Duration;

use highs::{HighsModelStatus, Model, RowProblem, Sense};

use crate::error::{FairError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ColSpec {
    pub cost: f64,
    pub lo: f64,
    pub hi: f64,
    pub integer: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowSpec {
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// A linear program in column/row-range form. `maximize` selects the sense.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub maximize: bool,
    pub cols: Vec<ColSpec>,
    pub rows: Vec<RowSpec>,
}

impl LinearProgram {
    pub fn new(maximize: bool) -> Self {
        Self { maximize, ..Default::default() }
    }

    pub fn add_col(&mut self, cost: f64, lo: f64, hi: f64, integer: bool) -> usize {
        self.cols.push(ColSpec { cost, lo, hi, integer });
        self.cols.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, lo: f64, hi: f64) -> usize {
        self.rows.push(RowSpec { coeffs, lo, hi });
        self.rows.len() - 1
    }

    pub fn has_integers(&self) -> bool {
        self.cols.iter().any(|c| c.integer)
    }
}

#[derive(Clone, Debug)]
pub struct MipSolution {
    pub values: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Row duals; the reduced cost of column `j` is `c_j - sum_r dual_r * a_rj`.
    pub row_duals: Vec<f64>,
    pub col_duals: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    pub seed: u64,
}

pub trait Backend: Send {
    fn name(&self) -> &'static str;
    fn solve_mip(&mut self, program: &LinearProgram, opts: &SolveOptions) -> Result<MipSolution>;
    fn solve_lp(&mut self, program: &LinearProgram, opts: &SolveOptions) -> Result<LpSolution>;
}

/// HiGHS backend. Each call builds a fresh model, so the handle itself carries
/// no solver state beyond tolerances.
#[derive(Clone, Debug)]
pub struct HighsBackend {
    pub mip_abs_gap: f64,
    pub feasibility_tol: f64,
}

impl Default for HighsBackend {
    fn default() -> Self {
        Self { mip_abs_gap: 1e-10, feasibility_tol: 1e-9 }
    }
}

impl HighsBackend {
    fn build(&self, program: &LinearProgram, opts: &SolveOptions, integral: bool) -> Model {
        let mut problem = RowProblem::default();
        let cols: Vec<_> = program
            .cols
            .iter()
            .map(|c| {
                if integral && c.integer {
                    problem.add_integer_column(c.cost, c.lo..=c.hi)
                } else {
                    problem.add_column(c.cost, c.lo..=c.hi)
                }
            })
            .collect();
        for row in &program.rows {
            let factors: Vec<_> = row.coeffs.iter().map(|&(j, a)| (cols[j], a)).collect();
            problem.add_row(row.lo..=row.hi, factors);
        }
        let sense = if program.maximize { Sense::Maximise } else { Sense::Minimise };
        let mut model = problem.optimise(sense);
        model.make_quiet();
        model.set_option("threads", 1);
        model.set_option("mip_rel_gap", 0.0);
        model.set_option("mip_abs_gap", self.mip_abs_gap);
        model.set_option("primal_feasibility_tolerance", self.feasibility_tol);
        model.set_option("dual_feasibility_tolerance", self.feasibility_tol);
        model.set_option("random_seed", (opts.seed % i32::MAX as u64) as i32);
        if let Some(limit) = opts.time_limit {
            model.set_option("time_limit", limit.as_secs_f64());
        }
        model
    }
}

fn map_status(status: HighsModelStatus, program: &LinearProgram) -> Result<()> {
    match status {
        HighsModelStatus::Optimal => Ok(()),
        HighsModelStatus::Infeasible => Err(FairError::Infeasible),
        HighsModelStatus::Unbounded => Err(FairError::Unbounded),
        // a box-bounded program cannot be unbounded
        HighsModelStatus::UnboundedOrInfeasible
            if program.cols.iter().all(|c| c.lo.is_finite() && c.hi.is_finite()) =>
        {
            Err(FairError::Infeasible)
        }
        HighsModelStatus::UnboundedOrInfeasible => Err(FairError::Unbounded),
        HighsModelStatus::ReachedTimeLimit => Err(FairError::TimeLimit),
        other => Err(FairError::Solver(format!("HiGHS status {other:?}"))),
    }
}

impl Backend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve_mip(&mut self, program: &LinearProgram, opts: &SolveOptions) -> Result<MipSolution> {
        if program.cols.is_empty() {
            return trivial(program).map(|(values, objective)| MipSolution { values, objective });
        }
        let solved = self
            .build(program, opts, true)
            .try_solve()
            .map_err(|e| FairError::Solver(format!("{e:?}")))?;
        map_status(solved.status(), program)?;
        let sol = solved.get_solution();
        Ok(MipSolution { values: sol.columns().to_vec(), objective: solved.objective_value() })
    }

    fn solve_lp(&mut self, program: &LinearProgram, opts: &SolveOptions) -> Result<LpSolution> {
        if program.cols.is_empty() {
            return trivial(program).map(|(values, objective)| LpSolution {
                values,
                objective,
                row_duals: vec![0.0; program.rows.len()],
                col_duals: vec![],
            });
        }
        let solved = self
            .build(program, opts, false)
            .try_solve()
            .map_err(|e| FairError::Solver(format!("{e:?}")))?;
        map_status(solved.status(), program)?;
        let sol = solved.get_solution();
        Ok(LpSolution {
            values: sol.columns().to_vec(),
            objective: solved.objective_value(),
            row_duals: sol.dual_rows().to_vec(),
            col_duals: sol.dual_columns().to_vec(),
        })
    }
}

// HiGHS reports an empty model as its own status; with no columns every row
// is a constant check.
fn trivial(program: &LinearProgram) -> Result<(Vec<f64>, f64)> {
    for row in &program.rows {
        if row.lo > 1e-9 || row.hi < -1e-9 {
            return Err(FairError::Infeasible);
        }
    }
    Ok((vec![], 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_duals_follow_reduced_cost_convention() {
        // max g s.t. l1 - g >= 0, l2 + l3 - g >= 0, l1 + l2 + l3 = 1
        let mut lp = LinearProgram::new(true);
        let g = lp.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY, false);
        let l: Vec<_> = (0..3).map(|_| lp.add_col(0.0, 0.0, f64::INFINITY, false)).collect();
        lp.add_row(vec![(l[0], 1.0), (g, -1.0)], 0.0, f64::INFINITY);
        lp.add_row(vec![(l[1], 1.0), (l[2], 1.0), (g, -1.0)], 0.0, f64::INFINITY);
        lp.add_row(l.iter().map(|&j| (j, 1.0)).collect(), 1.0, 1.0);
        let sol = HighsBackend::default().solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 0.5).abs() < 1e-9);
        // dual of >= rows in a max problem is nonpositive
        assert!(sol.row_duals[0] <= 1e-12 && sol.row_duals[1] <= 1e-12);
        for (j, col) in lp.cols.iter().enumerate() {
            let mut rc = col.cost;
            for (r, row) in lp.rows.iter().enumerate() {
                for &(jj, a) in &row.coeffs {
                    if jj == j {
                        rc -= sol.row_duals[r] * a;
                    }
                }
            }
            assert!((rc - sol.col_duals[j]).abs() < 1e-9, "col {j}: {rc} vs {}", sol.col_duals[j]);
        }
    }

    #[test]
    fn infeasible_mip_is_reported() {
        let mut lp = LinearProgram::new(true);
        let x = lp.add_col(1.0, 0.0, 1.0, true);
        lp.add_row(vec![(x, 1.0)], 1.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], f64::NEG_INFINITY, 0.0);
        let err = HighsBackend::default().solve_mip(&lp, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, FairError::Infeasible));
    }
}
