//! Serial dictatorship, random serial dictatorship, and the re-index and
//! perturb baselines.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FairError, Result};
use crate::model::{
    Constraint, IlpInstance, LinearObjective, Lottery, OptimalSet, Solution, SolutionPool, Solver, VarRef,
};
use crate::report::RuleReport;

pub const DEFAULT_EXACT_LIMIT: usize = 7;

/// A strict order over a set of agents; `sigma[0]` moves first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ordering {
    sigma: Vec<usize>,
    inverse: BTreeMap<usize, usize>,
}

impl Ordering {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let inverse: BTreeMap<usize, usize> = sigma.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        if inverse.len() != sigma.len() {
            return Err(FairError::Config("ordering repeats an agent".into()));
        }
        Ok(Self { sigma, inverse })
    }

    pub fn random<R: Rng + ?Sized>(agents: &[usize], rng: &mut R) -> Self {
        let mut sigma = agents.to_vec();
        sigma.shuffle(rng);
        Self::new(sigma).expect("agents are distinct")
    }

    /// Every ordering of `agents`.
    pub fn all(agents: &[usize]) -> impl Iterator<Item = Ordering> + '_ {
        agents
            .iter()
            .copied()
            .permutations(agents.len())
            .map(|p| Ordering::new(p).expect("agents are distinct"))
    }

    pub fn agents(&self) -> &[usize] {
        &self.sigma
    }

    /// Zero-based rank of `agent`.
    pub fn position(&self, agent: usize) -> Option<usize> {
        self.inverse.get(&agent).copied()
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }
}

/// Lexicographic objective bonuses `1/2^k` for one block of agents.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationVector {
    pub delta: Vec<f64>,
    pub block_size: usize,
}

impl PerturbationVector {
    pub fn block_size(omega: f64) -> usize {
        ((-omega.log2()).floor() as usize).max(1)
    }

    /// Bonuses for the first `len` agents of a block, capped at the block size.
    pub fn new(len: usize, omega: f64) -> Self {
        let block_size = Self::block_size(omega);
        let delta = (1..=len.min(block_size)).map(|k| 0.5f64.powi(k as i32)).collect();
        Self { delta, block_size }
    }

    pub fn total(&self) -> f64 {
        self.delta.iter().sum()
    }

    /// Each bonus outweighs all later ones together.
    pub fn is_dominant(&self) -> bool {
        (0..self.delta.len()).all(|k| self.delta[k] > self.delta[k + 1..].iter().sum::<f64>())
    }
}

fn fixing_rows(fixings: &BTreeMap<usize, f64>, band: Option<f64>) -> Vec<Constraint> {
    fixings
        .iter()
        .map(|(&i, &v)| match band {
            None => Constraint::fix_agent(i, v),
            Some(w) => Constraint::ge([(VarRef::X(i), 1.0)], v - w),
        })
        .collect()
}

fn agent_objective(inst: &IlpInstance, i: usize) -> LinearObjective {
    let mut agent = vec![0.0; inst.n_agents()];
    agent[i] = 1.0;
    LinearObjective { agent, aux: vec![0.0; inst.n_aux()], constant: 0.0, maximize: true }
}

fn fix_key(fixings: &BTreeMap<usize, f64>) -> Vec<(usize, i64)> {
    fixings.iter().map(|(&i, &v)| (i, (v * 1e9).round() as i64)).collect()
}

/// One dictator step, shared by every driver below.
struct Dictator<'a> {
    solver: &'a mut Solver,
    set: &'a OptimalSet,
    cardinal: bool,
    decisions: HashMap<(Vec<(usize, i64)>, usize), (f64, Option<Solution>)>,
    leaves: HashMap<Vec<(usize, i64)>, Solution>,
}

impl<'a> Dictator<'a> {
    fn new(solver: &'a mut Solver, set: &'a OptimalSet) -> Self {
        let cardinal = !set.instance.is_dichotomous();
        Self { solver, set, cardinal, decisions: HashMap::new(), leaves: HashMap::new() }
    }

    fn band(&self) -> Option<f64> {
        self.cardinal.then(|| self.solver.omega())
    }

    /// The value agent `i` secures given the earlier fixings.
    fn decide(&mut self, fixings: &BTreeMap<usize, f64>, i: usize) -> Result<(f64, Option<Solution>)> {
        let key = (fix_key(fixings), i);
        if let Some(hit) = self.decisions.get(&key) {
            return Ok(hit.clone());
        }
        let mut rows = fixing_rows(fixings, self.band());
        let out = if self.cardinal {
            let inst = self.set.restricted(rows)?;
            let (sol, value) = self.solver.solve_with(&inst, &agent_objective(&inst, i), None)?;
            (value, Some(sol))
        } else {
            rows.push(Constraint::fix_agent(i, 1.0));
            let inst = self.set.restricted(rows)?;
            match self.solver.solve_with(&inst, &inst.objective(), None) {
                Ok((sol, _)) => (1.0, Some(sol)),
                Err(FairError::Infeasible) => (0.0, None),
                Err(e) => return Err(e),
            }
        };
        self.decisions.insert(key, out.clone());
        Ok(out)
    }

    fn leaf(&mut self, fixings: &BTreeMap<usize, f64>, hint: Option<Solution>) -> Result<Solution> {
        let key = fix_key(fixings);
        if let Some(sol) = self.leaves.get(&key) {
            return Ok(sol.clone());
        }
        let sol = match hint {
            Some(sol) => sol,
            None => {
                let inst = self.set.restricted(fixing_rows(fixings, self.band()))?;
                self.solver.solve_with(&inst, &inst.objective(), None)?.0
            }
        };
        self.leaves.insert(key, sol.clone());
        Ok(sol)
    }

    /// Walks one ordering to its final solution.
    fn run(&mut self, sigma: &[usize]) -> Result<Solution> {
        let mut fixings = BTreeMap::new();
        let mut last = None;
        for &i in sigma {
            let (value, sol) = self.decide(&fixings, i)?;
            if sol.is_some() {
                last = sol;
            }
            fixings.insert(i, value);
        }
        // a later dictator's witness still meets every earlier fixing
        let hint = if self.cardinal { None } else { last };
        self.leaf(&fixings, hint)
    }

    /// Leaf probabilities averaged over all orderings of `remaining`.
    fn expand(
        &mut self,
        fixings: &BTreeMap<usize, f64>,
        remaining: &[usize],
        memo: &mut HashMap<Vec<(usize, i64)>, Vec<(Solution, f64)>>,
    ) -> Result<Vec<(Solution, f64)>> {
        let key = fix_key(fixings);
        if let Some(hit) = memo.get(&key) {
            return Ok(hit.clone());
        }
        let out = if remaining.is_empty() {
            vec![(self.leaf(fixings, None)?, 1.0)]
        } else {
            let share = 1.0 / remaining.len() as f64;
            let mut acc: Vec<(Solution, f64)> = Vec::new();
            for (k, &i) in remaining.iter().enumerate() {
                let (value, _) = self.decide(fixings, i)?;
                let mut next = fixings.clone();
                next.insert(i, value);
                let rest: Vec<usize> = remaining.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &a)| a).collect();
                for (sol, p) in self.expand(&next, &rest, memo)? {
                    match acc.iter_mut().find(|(s, _)| s.x == sol.x) {
                        Some(entry) => entry.1 += share * p,
                        None => acc.push((sol, share * p)),
                    }
                }
            }
            acc
        };
        memo.insert(key, out.clone());
        Ok(out)
    }
}

/// The solution reached when the agents of `sigma` pick in turn, each keeping
/// itself selected whenever optimality allows.
pub fn serial_dictatorship(solver: &mut Solver, set: &OptimalSet, sigma: &Ordering) -> Result<Solution> {
    if !set.instance.is_dichotomous() {
        return Err(FairError::NotDichotomous);
    }
    let mut fixings: Vec<Constraint> = Vec::new();
    let mut last = None;
    for &i in sigma.agents() {
        let mut rows = fixings.clone();
        rows.push(Constraint::fix_agent(i, 1.0));
        let inst = set.restricted(rows.clone())?;
        match solver.solve_with(&inst, &inst.objective(), None) {
            Ok((sol, _)) => {
                fixings = rows;
                last = Some(sol);
            }
            Err(FairError::Infeasible) => {}
            Err(e) => return Err(e),
        }
    }
    match last {
        Some(sol) => Ok(sol),
        None => {
            let inst = set.restricted(fixings)?;
            Ok(solver.solve_with(&inst, &inst.objective(), None)?.0)
        }
    }
}

/// Serial dictatorship with real-valued agent utilities: each dictator
/// maximizes its own value, which later dictators must then preserve up to ω.
pub fn serial_dictatorship_cardinal(solver: &mut Solver, set: &OptimalSet, sigma: &Ordering) -> Result<Solution> {
    let omega = solver.omega();
    let mut fixings = BTreeMap::new();
    let mut last = None;
    for &i in sigma.agents() {
        let inst = set.restricted(fixing_rows(&fixings, Some(omega)))?;
        let (sol, value) = solver.solve_with(&inst, &agent_objective(&inst, i), None)?;
        fixings.insert(i, value);
        last = Some(sol);
    }
    match last {
        Some(sol) => Ok(sol),
        None => Ok(solver.solve_with(set.bounded(), &set.instance.objective(), None)?.0),
    }
}

/// Serial dictatorship through objective bonuses `v_i + 1/2^k` for the agent
/// ranked `k`, one block of at most `⌊-log2 ω⌋` agents per solve.
pub fn rsd_perturbation(solver: &mut Solver, instance: &IlpInstance, sigma: &Ordering) -> Result<Solution> {
    if !instance.is_dichotomous() {
        return Err(FairError::NotDichotomous);
    }
    if !instance.has_integer_data() {
        return Err(FairError::NonIntegerObjective(
            "bonus ordering needs integer objective coefficients and integer variables".into(),
        ));
    }
    let base = instance.objective();
    let block = PerturbationVector::block_size(solver.omega());
    let mut current = instance.clone();
    let mut last = None;
    for chunk in sigma.agents().chunks(block) {
        let delta = PerturbationVector::new(chunk.len(), solver.omega());
        let mut objective = base.clone();
        for (k, &i) in chunk.iter().enumerate() {
            objective.agent[i] += delta.delta[k];
        }
        let (sol, _) = solver.solve_with(&current, &objective, None)?;
        current = current.with_rows(chunk.iter().map(|&i| Constraint::fix_agent(i, sol.x[i].round())))?;
        last = Some(sol);
    }
    match last {
        Some(sol) => Ok(sol),
        None => Ok(solver.solve_with(instance, &base, None)?.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsdMode {
    /// Every ordering, `|M|!` of them at most.
    Exact { limit: usize },
    Sample { trials: usize, seed: u64 },
}

impl RsdMode {
    pub fn exact() -> Self {
        RsdMode::Exact { limit: DEFAULT_EXACT_LIMIT }
    }
}

/// The random serial dictatorship distribution over the orderings of `agents`.
pub fn rsd_distribution(solver: &mut Solver, set: &OptimalSet, agents: &[usize], mode: RsdMode) -> Result<RuleReport> {
    let start = Instant::now();
    let calls_before = solver.stats.mip_calls;
    let mut dictator = Dictator::new(solver, set);
    let (leaves, approximate, trials) = match mode {
        RsdMode::Exact { limit } => {
            if agents.len() > limit {
                return Err(FairError::TooLargeForExact { agents: agents.len(), limit });
            }
            let mut memo = HashMap::new();
            (dictator.expand(&BTreeMap::new(), agents, &mut memo)?, false, 0)
        }
        RsdMode::Sample { trials, seed } => {
            if trials == 0 {
                return Err(FairError::Config("at least one trial is required".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut counts: Vec<(Solution, f64)> = Vec::new();
            for _ in 0..trials {
                let sigma = Ordering::random(agents, &mut rng);
                let sol = dictator.run(sigma.agents())?;
                match counts.iter_mut().find(|(s, _)| s.x == sol.x) {
                    Some(entry) => entry.1 += 1.0,
                    None => counts.push((sol, 1.0)),
                }
            }
            for entry in &mut counts {
                entry.1 /= trials as f64;
            }
            (counts, true, trials)
        }
    };
    let mut pool = SolutionPool::new(set.z_star);
    let mut weights = Vec::new();
    for (sol, p) in leaves {
        pool.insert(sol);
        weights.push(p);
    }
    pool.complete = false;
    let lottery = Lottery(weights);
    let d = lottery.mix(&pool)?;
    let name = if approximate { "rsd-sample" } else { "rsd" };
    let mut report = RuleReport::new(name, d, pool, Some(lottery));
    report.approximate = approximate;
    report.pricing_calls = solver.stats.mip_calls - calls_before;
    report.iterations = trials;
    if approximate {
        report.std_error = Some(std_error(&report, trials));
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Per-agent standard error of the sample mean.
fn std_error(report: &RuleReport, trials: usize) -> Vec<f64> {
    let lottery = report.lottery.as_ref().expect("sampled reports carry a lottery");
    let t = trials as f64;
    report
        .distribution
        .0
        .iter()
        .enumerate()
        .map(|(i, &mean)| {
            if trials < 2 {
                return 0.0;
            }
            let second: f64 = report.pool.xs().zip(&lottery.0).map(|(x, &p)| p * x[i] * x[i]).sum();
            let var = (second - mean * mean).max(0.0) * t / (t - 1.0);
            (var / t).sqrt()
        })
        .collect()
}

/// Draws one ordering and returns its serial dictatorship solution.
pub fn sample_rsd(solver: &mut Solver, set: &OptimalSet, agents: &[usize], seed: u64) -> Result<Solution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = Ordering::random(agents, &mut rng);
    if set.instance.is_dichotomous() {
        serial_dictatorship(solver, set, &sigma)
    } else {
        serial_dictatorship_cardinal(solver, set, &sigma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeuristicKind {
    /// Shuffle the column order of the agent variables.
    Reindex,
    /// Add uniform noise to the agent objective coefficients; `raw` keeps
    /// draws that lose optimality.
    Perturb { raw: bool },
}

impl HeuristicKind {
    pub fn name(&self) -> &'static str {
        match self {
            HeuristicKind::Reindex => "reindex",
            HeuristicKind::Perturb { raw: false } => "perturb",
            HeuristicKind::Perturb { raw: true } => "perturb-raw",
        }
    }
}

/// Redraws allowed per trial before the unperturbed objective is used.
pub const MAX_REDRAWS: usize = 1000;

/// Empirical distribution of repeated single solves under randomized inputs.
pub fn heuristic(solver: &mut Solver, set: &OptimalSet, kind: HeuristicKind, trials: usize, seed: u64) -> Result<RuleReport> {
    if trials == 0 {
        return Err(FairError::Config("at least one trial is required".into()));
    }
    let start = Instant::now();
    let calls_before = solver.stats.mip_calls;
    let inst = &set.instance;
    let n = inst.n_agents();
    let base = inst.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-6 * set.z_star.abs().max(1.0);
    let spread = if n == 0 { 0.0 } else { (base.agent.iter().sum::<f64>() / n as f64).abs() };
    let mut rejections = 0;
    let mut counts: Vec<(Solution, f64)> = Vec::new();
    for _ in 0..trials {
        let sol = match kind {
            HeuristicKind::Reindex => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                solver.solve_with(inst, &base, Some(&order))?.0
            }
            HeuristicKind::Perturb { raw } => {
                let mut kept = None;
                for _ in 0..MAX_REDRAWS {
                    let mut objective = base.clone();
                    if spread > 0.0 {
                        for v in &mut objective.agent {
                            *v += rng.random_range(-spread..=spread);
                        }
                    }
                    let (sol, _) = solver.solve_with(inst, &objective, None)?;
                    let value = if base.maximize { sol.objective } else { -sol.objective };
                    let target = if base.maximize { set.z_star } else { -set.z_star };
                    if raw || value >= target - tol {
                        kept = Some(sol);
                        break;
                    }
                    rejections += 1;
                }
                match kept {
                    Some(sol) => sol,
                    None => {
                        log::warn!("perturb: no optimal draw in {MAX_REDRAWS} attempts, using the unperturbed objective");
                        solver.solve_with(inst, &base, None)?.0
                    }
                }
            }
        };
        match counts.iter_mut().find(|(s, _)| s.x == sol.x) {
            Some(entry) => entry.1 += 1.0,
            None => counts.push((sol, 1.0)),
        }
    }
    let mut pool = SolutionPool::new(set.z_star);
    let mut weights = Vec::new();
    for (sol, c) in counts {
        pool.insert(sol);
        weights.push(c / trials as f64);
    }
    pool.complete = false;
    let lottery = Lottery(weights);
    let d = lottery.mix(&pool)?;
    let mut report = RuleReport::new(kind.name(), d, pool, Some(lottery));
    report.approximate = true;
    report.iterations = trials;
    report.pricing_calls = solver.stats.mip_calls - calls_before;
    if let HeuristicKind::Perturb { .. } = kind {
        report.rejections = Some(rejections);
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SolverConfig;
    use proptest::prelude::*;

    fn example1() -> OptimalSet {
        let inst = IlpInstance::binary(
            vec![4.0, 3.0, 1.0, 1.0],
            vec![Constraint::le(
                [(VarRef::X(0), 4.0), (VarRef::X(1), 2.5), (VarRef::X(2), 2.5), (VarRef::X(3), 2.5)],
                6.0,
            )],
        )
        .unwrap();
        OptimalSet::exact(inst, 4.0).unwrap()
    }

    fn sd(sigma: &[usize]) -> Vec<f64> {
        let mut s = Solver::new(SolverConfig::default());
        serial_dictatorship(&mut s, &example1(), &Ordering::new(sigma.to_vec()).unwrap()).unwrap().x
    }

    #[test]
    fn ordering_rejects_repeats() {
        assert!(Ordering::new(vec![0, 1, 0]).is_err());
        let o = Ordering::new(vec![3, 1]).unwrap();
        assert_eq!(o.position(1), Some(1));
        assert_eq!(o.position(0), None);
        assert_eq!(Ordering::all(&[0, 1, 2]).count(), 6);
    }

    #[test]
    fn dictator_traces() {
        assert_eq!(sd(&[0, 1, 2, 3]), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(sd(&[1, 2, 0, 3]), vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(sd(&[3, 2, 1, 0]), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn bonuses_agree_with_probing() {
        let set = example1();
        let mut s = Solver::new(SolverConfig::default());
        for sigma in Ordering::all(&[0, 1, 2, 3]) {
            let a = serial_dictatorship(&mut s, &set, &sigma).unwrap();
            let b = rsd_perturbation(&mut s, &set.instance, &sigma).unwrap();
            assert_eq!(a.x, b.x, "{:?}", sigma.agents());
        }
    }

    #[test]
    fn exact_example1() {
        let mut s = Solver::new(SolverConfig::default());
        let r = rsd_distribution(&mut s, &example1(), &[0, 1, 2, 3], RsdMode::exact()).unwrap();
        let want = [0.25, 0.75, 0.375, 0.375];
        for (a, b) in r.distribution.0.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.is_consistent(1e-9));
        let err = rsd_distribution(&mut s, &example1(), &[0, 1, 2, 3], RsdMode::Exact { limit: 3 });
        assert!(matches!(err, Err(FairError::TooLargeForExact { .. })));
    }

    #[test]
    fn sampled_example1_is_close_and_reproducible() {
        let mut s = Solver::new(SolverConfig::default());
        let mode = RsdMode::Sample { trials: 10_000, seed: 42 };
        let r = rsd_distribution(&mut s, &example1(), &[0, 1, 2, 3], mode).unwrap();
        let want = [0.25, 0.75, 0.375, 0.375];
        for (a, b) in r.distribution.0.iter().zip(want) {
            assert!((a - b).abs() < 0.02);
        }
        let again = rsd_distribution(&mut s, &example1(), &[0, 1, 2, 3], mode).unwrap();
        assert_eq!(r.distribution, again.distribution);
        assert!(r.std_error.unwrap().iter().all(|&e| e > 0.0 && e < 0.01));
    }

    #[test]
    fn single_agent_gets_its_best() {
        let mut s = Solver::new(SolverConfig::default());
        let r = rsd_distribution(&mut s, &example1(), &[0], RsdMode::exact()).unwrap();
        assert_eq!(r.distribution.0[0], 1.0);
    }

    #[test]
    fn reindex_stays_in_pool() {
        let set = example1();
        let mut s = Solver::new(SolverConfig::default());
        let pool = crate::enumeration::enumerate_optimal(&mut s, &set, 100).unwrap();
        let r = heuristic(&mut s, &set, HeuristicKind::Reindex, 200, 7).unwrap();
        assert!(r.pool.xs().all(|x| pool.contains_x(x)));
        let one = heuristic(&mut s, &set, HeuristicKind::Reindex, 1, 7).unwrap();
        assert!(pool.contains_x(&one.distribution.0));
    }

    #[test]
    fn perturb_keeps_optimal_draws() {
        let set = example1();
        let mut s = Solver::new(SolverConfig::default());
        let r = heuristic(&mut s, &set, HeuristicKind::Perturb { raw: false }, 200, 3).unwrap();
        let total: f64 = r.distribution.0.iter().sum();
        assert!((1.0..=2.0).contains(&total));
        assert!(r.pool.solutions().iter().all(|sol| (sol.objective - 4.0).abs() < 1e-6));
        assert!(r.rejections.is_some());
    }

    proptest! {
        #[test]
        fn bonuses_are_dominant(len in 0usize..40, exp in 1i32..30) {
            let omega = 2f64.powi(-exp);
            let p = PerturbationVector::new(len, omega);
            prop_assert!(p.delta.len() <= p.block_size);
            prop_assert!(p.total() < 1.0);
            prop_assert!(p.is_dominant());
            prop_assert!(p.delta.iter().all(|&d| d >= omega));
        }
    }
}
