use std::fmt;

use serde::Serialize;

use super::{prepare, run_rule, Rule, RuleOptions};
use crate::backend::LinearProgram;
use crate::enumeration::{enumerate_optimal, partition_from_pool};
use crate::error::{FairError, Result};
use crate::model::{IlpInstance, NearOptConfig, SolutionPool, Solver};

const TOL: f64 = 1e-6;
const RERUN_TOL: f64 = 1e-5;
/// Largest agent count for which relabeling re-runs are attempted.
pub const SYMMETRY_LIMIT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotAudited,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotAudited => "not audited",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl AxiomCheck {
    fn new(axiom: &str, verdict: Verdict, witness: Option<String>) -> Self {
        Self { axiom: axiom.into(), verdict, witness }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub rule: String,
    pub checks: Vec<AxiomCheck>,
}

impl AuditReport {
    pub fn verdict(&self, axiom: &str) -> Option<Verdict> {
        self.checks.iter().find(|c| c.axiom == axiom).map(|c| c.verdict)
    }
}

/// Checks `d` against the fair-share and efficiency axioms over a complete pool.
pub fn axiom_audit(solver: &mut Solver, rule: &str, pool: &SolutionPool, d: &[f64]) -> Result<AuditReport> {
    if !pool.complete {
        return Err(FairError::PoolIncomplete);
    }
    let (_, _, agents) = partition_from_pool(pool)?;
    let m = agents.len();
    let mut checks = Vec::new();

    let ifs = agents.iter().find(|&&i| d[i] < 1.0 / m as f64 - TOL);
    checks.push(match ifs {
        Some(&i) => AxiomCheck::new(
            "IFS",
            Verdict::Fail,
            Some(format!("agent {} has {:.6} < 1/{m}", i + 1, d[i])),
        ),
        None => AxiomCheck::new("IFS", Verdict::Pass, None),
    });

    // groups of agents that agree on every solution
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &agents {
        match groups.iter_mut().find(|g| pool.xs().all(|x| (x[g[0]] - x[i]).abs() < 1e-9)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let ufs = groups.iter().find(|g| d[g[0]] < g.len() as f64 / m as f64 - TOL);
    checks.push(match ufs {
        Some(g) => AxiomCheck::new(
            "UFS",
            Verdict::Fail,
            Some(format!(
                "group {:?} has {:.6} < {}/{m}",
                g.iter().map(|i| i + 1).collect::<Vec<_>>(),
                d[g[0]],
                g.len()
            )),
        ),
        None => AxiomCheck::new("UFS", Verdict::Pass, None),
    });

    checks.push(pareto(solver, pool, d, &agents)?);
    checks.push(AxiomCheck::new("average fair share", Verdict::NotAudited, None));
    checks.push(AxiomCheck::new("core fair share", Verdict::NotAudited, None));
    Ok(AuditReport { rule: rule.into(), checks })
}

/// Looks for a mixture of pool entries that weakly dominates `d` with a strict
/// gain for some agent.
fn pareto(solver: &mut Solver, pool: &SolutionPool, d: &[f64], agents: &[usize]) -> Result<AxiomCheck> {
    let mut lp = LinearProgram::new(true);
    let cols: Vec<usize> = pool
        .xs()
        .map(|x| lp.add_col(agents.iter().map(|&i| x[i]).sum(), 0.0, f64::INFINITY, false))
        .collect();
    lp.add_row(cols.iter().map(|&c| (c, 1.0)).collect(), 1.0, 1.0);
    for &i in agents {
        let coeffs = pool.xs().zip(&cols).map(|(x, &c)| (c, x[i])).collect();
        lp.add_row(coeffs, d[i], f64::INFINITY);
    }
    let sol = solver.solve_lp(&lp)?;
    let base: f64 = agents.iter().map(|&i| d[i]).sum();
    if sol.objective > base + TOL {
        let better: Vec<f64> = agents
            .iter()
            .map(|&i| pool.xs().zip(&sol.values).map(|(x, &l)| l * x[i]).sum())
            .collect();
        Ok(AxiomCheck::new("Pareto", Verdict::Fail, Some(format!("dominated by {better:.6?}"))))
    } else {
        Ok(AxiomCheck::new("Pareto", Verdict::Pass, None))
    }
}

fn distribution(solver: &mut Solver, inst: IlpInstance, near: NearOptConfig, rule: Rule, opts: &RuleOptions) -> Result<Vec<f64>> {
    let prep = prepare(solver, inst, near)?;
    Ok(run_rule(solver, &prep, rule, opts)?.distribution.0)
}

fn identity(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Re-runs the rule with two agents swapped and checks that their
/// probabilities swap with them.
fn anonymity(
    solver: &mut Solver,
    inst: &IlpInstance,
    near: NearOptConfig,
    rule: Rule,
    opts: &RuleOptions,
    d: &[f64],
) -> Result<AxiomCheck> {
    let n = inst.n_agents();
    for a in 0..n {
        for b in a + 1..n {
            let mut perm = identity(n);
            perm.swap(a, b);
            let relabeled = inst.relabeled(&perm, &identity(inst.n_aux()), &identity(inst.rows().len()))?;
            let e = distribution(solver, relabeled, near, rule, opts)?;
            if let Some(i) = (0..n).find(|&i| (e[perm[i]] - d[i]).abs() > RERUN_TOL) {
                return Ok(AxiomCheck::new(
                    "anonymity",
                    Verdict::Fail,
                    Some(format!(
                        "swapping agents {} and {} moves agent {} from {:.6} to {:.6}",
                        a + 1,
                        b + 1,
                        i + 1,
                        d[i],
                        e[perm[i]]
                    )),
                ));
            }
        }
    }
    Ok(AxiomCheck::new("anonymity", Verdict::Pass, None))
}

/// Re-runs the rule with auxiliary variables and rows listed in reverse.
fn neutrality(
    solver: &mut Solver,
    inst: &IlpInstance,
    near: NearOptConfig,
    rule: Rule,
    opts: &RuleOptions,
    d: &[f64],
) -> Result<AxiomCheck> {
    let aux: Vec<usize> = (0..inst.n_aux()).rev().collect();
    let rows: Vec<usize> = (0..inst.rows().len()).rev().collect();
    let relabeled = inst.relabeled(&identity(inst.n_agents()), &aux, &rows)?;
    let e = distribution(solver, relabeled, near, rule, opts)?;
    match (0..d.len()).find(|&i| (e[i] - d[i]).abs() > RERUN_TOL) {
        Some(i) => Ok(AxiomCheck::new(
            "neutrality",
            Verdict::Fail,
            Some(format!("agent {} moves from {:.6} to {:.6}", i + 1, d[i], e[i])),
        )),
        None => Ok(AxiomCheck::new("neutrality", Verdict::Pass, None)),
    }
}

/// Full audit of one rule on one instance: pool-based axioms plus relabeling
/// re-runs on instances with at most [`SYMMETRY_LIMIT`] agents.
pub fn audit_rule(
    solver: &mut Solver,
    inst: &IlpInstance,
    near: NearOptConfig,
    rule: Rule,
    opts: &RuleOptions,
) -> Result<AuditReport> {
    let prep = prepare(solver, inst.clone(), near)?;
    let d = run_rule(solver, &prep, rule, opts)?.distribution.0;
    let pool = enumerate_optimal(solver, &prep.set, opts.cap)?;
    let mut report = axiom_audit(solver, &rule.to_string(), &pool, &d)?;
    if inst.n_agents() <= SYMMETRY_LIMIT && !rule.is_sampled() {
        report.checks.push(anonymity(solver, inst, near, rule, opts, &d)?);
        report.checks.push(neutrality(solver, inst, near, rule, opts, &d)?);
    } else {
        report.checks.push(AxiomCheck::new("anonymity", Verdict::NotAudited, None));
        report.checks.push(AxiomCheck::new("neutrality", Verdict::NotAudited, None));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::{instance_from_outcomes, uniform_rule};
    use crate::model::{Constraint, SolverConfig, VarRef};

    fn ifs_pool() -> SolutionPool {
        SolutionPool::from_xs(
            [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]],
            0.0,
            true,
        )
    }

    #[test]
    fn uniform_fails_ifs() {
        let mut s = Solver::new(SolverConfig::default());
        let pool = ifs_pool();
        let d = uniform_rule(&pool).unwrap().distribution.0;
        let r = axiom_audit(&mut s, "uniform", &pool, &d).unwrap();
        assert_eq!(r.verdict("IFS"), Some(Verdict::Fail));
        assert!(r.checks[0].witness.as_ref().unwrap().contains("agent 1"));
        // (0,1,0) is dominated by (0,1,1), so uniform is not efficient
        assert_eq!(r.verdict("Pareto"), Some(Verdict::Fail));
        assert_eq!(r.verdict("core fair share"), Some(Verdict::NotAudited));
    }

    #[test]
    fn nash_passes_on_ifs_pool() {
        let mut s = Solver::new(SolverConfig::default());
        let inst = instance_from_outcomes(3, &ifs_pool().xs().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap();
        let r = audit_rule(&mut s, &inst, NearOptConfig::exact(), Rule::Nash, &RuleOptions::default()).unwrap();
        for axiom in ["IFS", "UFS", "Pareto", "anonymity"] {
            assert_eq!(r.verdict(axiom), Some(Verdict::Pass), "{axiom}: {r:?}");
        }
    }

    #[test]
    fn first_solution_is_not_anonymous() {
        let mut s = Solver::new(SolverConfig::default());
        let inst = IlpInstance::binary(
            vec![4.0, 3.0, 1.0, 1.0],
            vec![Constraint::le(
                [(VarRef::X(0), 4.0), (VarRef::X(1), 2.5), (VarRef::X(2), 2.5), (VarRef::X(3), 2.5)],
                6.0,
            )],
        )
        .unwrap();
        let r = audit_rule(&mut s, &inst, NearOptConfig::exact(), Rule::First, &RuleOptions::default()).unwrap();
        assert_eq!(r.verdict("anonymity"), Some(Verdict::Fail));
        assert_eq!(r.verdict("IFS"), Some(Verdict::Fail));
    }

    #[test]
    fn incomplete_pool_rejected() {
        let mut s = Solver::new(SolverConfig::default());
        let mut pool = ifs_pool();
        pool.complete = false;
        assert!(matches!(axiom_audit(&mut s, "x", &pool, &[0.0; 3]), Err(FairError::PoolIncomplete)));
    }
}
