//! Rule dispatch, fairness metrics, the experiment harness and the axiom audit.

mod audit;
mod experiment;

pub use audit::{audit_rule, axiom_audit, AuditReport, AxiomCheck, Verdict};
pub use experiment::{
    load_instance, run_experiment, ExperimentConfig, ExperimentOutcome, Format, InstanceSource, MetricsRow,
    SummaryRow,
};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::colgen::{self, AgentScale, ConvexObjective, ConvexOptions, LeximinOptions};
use crate::enumeration::{enumerate_optimal, uniform_rule, DEFAULT_CAP};
use crate::error::{FairError, Result};
use crate::model::{IlpInstance, Lottery, NearOptConfig, OptimalSet, SolutionPool, Solver};
use crate::partition::{compute_bounds, Bounds};
use crate::report::RuleReport;
use crate::rsd::{self, HeuristicKind, Ordering, RsdMode, DEFAULT_EXACT_LIMIT};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rule {
    Uniform,
    Leximin,
    Maximin,
    Nash,
    KNorm(f64),
    /// Exact when `|M|` is within the exact limit, sampled otherwise.
    Rsd,
    RsdSample,
    Reindex,
    Perturb,
    PerturbRaw,
    /// Serial dictatorship in index order: a fixed, deterministic choice.
    First,
}

impl Rule {
    pub const ALL_NAMES: &'static [&'static str] = &[
        "uniform", "leximin", "maximin", "nash", "knorm:<k>", "rsd", "rsd-sample", "reindex", "perturb", "perturb-raw", "first",
    ];

    /// True for rules that return an empirical estimate.
    pub fn is_sampled(&self) -> bool {
        matches!(self, Rule::RsdSample | Rule::Reindex | Rule::Perturb | Rule::PerturbRaw)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Uniform => f.write_str("uniform"),
            Rule::Leximin => f.write_str("leximin"),
            Rule::Maximin => f.write_str("maximin"),
            Rule::Nash => f.write_str("nash"),
            Rule::KNorm(k) => write!(f, "knorm:{k}"),
            Rule::Rsd => f.write_str("rsd"),
            Rule::RsdSample => f.write_str("rsd-sample"),
            Rule::Reindex => f.write_str("reindex"),
            Rule::Perturb => f.write_str("perturb"),
            Rule::PerturbRaw => f.write_str("perturb-raw"),
            Rule::First => f.write_str("first"),
        }
    }
}

impl FromStr for Rule {
    type Err = FairError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "uniform" => Rule::Uniform,
            "leximin" => Rule::Leximin,
            "maximin" => Rule::Maximin,
            "nash" => Rule::Nash,
            "rsd" | "rsd-exact" => Rule::Rsd,
            "rsd-sample" => Rule::RsdSample,
            "reindex" => Rule::Reindex,
            "perturb" => Rule::Perturb,
            "perturb-raw" => Rule::PerturbRaw,
            "first" | "deterministic" => Rule::First,
            other => match other.strip_prefix("knorm:").or_else(|| other.strip_prefix("knorm")) {
                Some(k) => Rule::KNorm(
                    k.parse().map_err(|_| FairError::Config(format!("cannot read k in {other:?}")))?,
                ),
                None => {
                    return Err(FairError::Config(format!(
                        "unknown rule {other:?}; expected one of {}",
                        Rule::ALL_NAMES.join(", ")
                    )))
                }
            },
        })
    }
}

#[derive(Clone, Debug)]
pub struct RuleOptions {
    pub cap: usize,
    pub trials: usize,
    pub seed: u64,
    pub exact_limit: usize,
    pub leximin: LeximinOptions,
    pub convex: ConvexOptions,
}

impl Default for RuleOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            trials: 1000,
            seed: 0,
            exact_limit: DEFAULT_EXACT_LIMIT,
            leximin: LeximinOptions::default(),
            convex: ConvexOptions::default(),
        }
    }
}

/// The optimal set of an instance together with its agent bounds.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub set: OptimalSet,
    pub bounds: Bounds,
    pub t_opt_s: f64,
    pub t_partition_s: f64,
}

impl Prepared {
    /// Agents whose value varies over the optimal set.
    pub fn agents(&self) -> &[usize] {
        &self.bounds.varying
    }

    pub fn is_cardinal(&self) -> bool {
        !self.set.instance.is_dichotomous()
    }

    /// Scale in which the min-probability and Nash metrics are read.
    pub fn metric_scale(&self) -> AgentScale {
        if self.is_cardinal() {
            AgentScale::normalized(&self.bounds)
        } else {
            AgentScale::identity(self.set.n_agents(), self.agents())
        }
    }

    fn nash_scale(&self) -> AgentScale {
        if self.is_cardinal() {
            AgentScale::gains(&self.bounds)
        } else {
            self.metric_scale()
        }
    }
}

pub fn prepare(solver: &mut Solver, instance: IlpInstance, near: NearOptConfig) -> Result<Prepared> {
    let clock = Instant::now();
    let set = OptimalSet::solve(solver, instance, near)?;
    let t_opt_s = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let bounds = compute_bounds(solver, &set)?;
    Ok(Prepared { set, bounds, t_opt_s, t_partition_s: clock.elapsed().as_secs_f64() })
}

fn seed_pool(prep: &Prepared) -> SolutionPool {
    prep.bounds.witness_pool.clone()
}

pub fn run_rule(solver: &mut Solver, prep: &Prepared, rule: Rule, opts: &RuleOptions) -> Result<RuleReport> {
    let set = &prep.set;
    let agents = prep.agents();
    match rule {
        Rule::Uniform => {
            let pool = enumerate_optimal(solver, set, opts.cap)?;
            uniform_rule(&pool)
        }
        Rule::Leximin => colgen::leximin(solver, set, &prep.metric_scale(), &seed_pool(prep), &opts.leximin),
        Rule::Maximin => colgen::maximin(solver, set, &prep.metric_scale(), &seed_pool(prep), &opts.leximin),
        Rule::Nash => colgen::minimize_convex(
            solver,
            set,
            &ConvexObjective::nash(prep.nash_scale()),
            &seed_pool(prep),
            &opts.convex,
        ),
        Rule::KNorm(k) => colgen::minimize_convex(
            solver,
            set,
            &ConvexObjective::knorm(k, prep.metric_scale())?,
            &seed_pool(prep),
            &opts.convex,
        ),
        Rule::Rsd if agents.len() <= opts.exact_limit => {
            rsd::rsd_distribution(solver, set, agents, RsdMode::Exact { limit: opts.exact_limit })
        }
        Rule::Rsd | Rule::RsdSample => {
            rsd::rsd_distribution(solver, set, agents, RsdMode::Sample { trials: opts.trials, seed: opts.seed })
        }
        Rule::Reindex => rsd::heuristic(solver, set, HeuristicKind::Reindex, opts.trials, opts.seed),
        Rule::Perturb => rsd::heuristic(solver, set, HeuristicKind::Perturb { raw: false }, opts.trials, opts.seed),
        Rule::PerturbRaw => rsd::heuristic(solver, set, HeuristicKind::Perturb { raw: true }, opts.trials, opts.seed),
        Rule::First => {
            let clock = Instant::now();
            let sigma = Ordering::new((0..set.n_agents()).collect())?;
            let sol = if prep.is_cardinal() {
                rsd::serial_dictatorship_cardinal(solver, set, &sigma)?
            } else {
                rsd::serial_dictatorship(solver, set, &sigma)?
            };
            let mut pool = SolutionPool::new(set.z_star);
            pool.insert(sol);
            let lottery = Lottery(vec![1.0]);
            let d = lottery.mix(&pool)?;
            let mut report = RuleReport::new("first", d, pool, Some(lottery));
            report.wall_time_s = clock.elapsed().as_secs_f64();
            Ok(report)
        }
    }
}

/// Minimum agent value and log Nash product of `d` over `scale.agents`.
pub fn fairness_metrics(scale: &AgentScale, d: &[f64]) -> (f64, f64) {
    if scale.agents.is_empty() {
        return (1.0, 0.0);
    }
    let a = scale.column(d);
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let log_nash = a.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).sum();
    (min, log_nash)
}

/// `value / reference`, 1 when both are zero.
pub fn min_ratio(value: f64, reference: f64) -> f64 {
    if reference.abs() < 1e-12 {
        if value.abs() < 1e-12 {
            1.0
        } else {
            0.0
        }
    } else {
        value / reference
    }
}

/// Ratio of Nash products from their logarithms; 0 once any factor vanishes.
pub fn nash_ratio(log_nash: f64, reference: f64) -> f64 {
    if log_nash == f64::NEG_INFINITY {
        0.0
    } else {
        (log_nash - reference).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Constraint, SolverConfig, VarRef};

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
    fn rule_names_round_trip() {
        for r in [Rule::Uniform, Rule::Leximin, Rule::Nash, Rule::KNorm(2.0), Rule::Rsd, Rule::PerturbRaw, Rule::First] {
            assert_eq!(r.to_string().parse::<Rule>().unwrap(), r);
        }
        assert_eq!("rsd-exact".parse::<Rule>().unwrap(), Rule::Rsd);
        assert!("borda".parse::<Rule>().is_err());
        assert!("knorm:x".parse::<Rule>().is_err());
    }

    #[test]
    fn metrics_and_ratios() {
        let scale = AgentScale::identity(4, &[0, 1, 2, 3]);
        let (min, log) = fairness_metrics(&scale, &[0.25, 0.75, 0.375, 0.375]);
        assert_eq!(min, 0.25);
        assert!((log - (0.25f64 * 0.75 * 0.375 * 0.375).ln()).abs() < 1e-12);
        assert_eq!(nash_ratio(f64::NEG_INFINITY, -2.0), 0.0);
        assert_eq!(min_ratio(0.0, 0.0), 1.0);
    }

    #[test]
    fn example1_rules() {
        let mut s = Solver::new(SolverConfig::default());
        let prep = prepare(&mut s, example1(), NearOptConfig::exact()).unwrap();
        assert_eq!(prep.agents(), &[0, 1, 2, 3]);
        let opts = RuleOptions::default();
        let first = run_rule(&mut s, &prep, Rule::First, &opts).unwrap();
        assert_eq!(first.distribution.0, vec![1.0, 0.0, 0.0, 0.0]);
        let lex = run_rule(&mut s, &prep, Rule::Leximin, &opts).unwrap();
        let nash = run_rule(&mut s, &prep, Rule::Nash, &opts).unwrap();
        let (lmin, _) = fairness_metrics(&prep.metric_scale(), &lex.distribution.0);
        let (_, nlog) = fairness_metrics(&prep.metric_scale(), &nash.distribution.0);
        assert!((lmin - 1.0 / 3.0).abs() < 1e-6);
        assert!((nlog - (0.25f64 * 0.75 * 0.375 * 0.375).ln()).abs() < 1e-5);
    }
}
