use std::time::Instant;

use crate::backend::LinearProgram;
use crate::error::{FairError, Result};
use crate::model::{solve_pricing, Distribution, Lottery, OptimalSet, SolutionPool, Solver};
use crate::report::RuleReport;

use super::AgentScale;

#[derive(Clone, Debug)]
pub struct LeximinOptions {
    /// Columns are added while their reduced cost exceeds this.
    pub rc_tol: f64,
    /// Slack kept on rows of fixed agents.
    pub fix_band: f64,
    pub max_columns: usize,
}

impl Default for LeximinOptions {
    fn default() -> Self {
        Self { rc_tol: 1e-8, fix_band: 1e-9, max_columns: 100_000 }
    }
}

/// Column pool, fixed agents and the last duals of a leximin run.
#[derive(Clone, Debug, Default)]
pub struct ColGenState {
    pub pool: SolutionPool,
    pub free: Vec<usize>,
    /// Agents whose value is settled, with that value.
    pub fixed: Vec<(usize, f64)>,
    /// Row duals per agent (zero for agents without a row).
    pub mu: Vec<f64>,
    /// Dual of the convexity row.
    pub rho: f64,
    pub gamma: f64,
    pub theta: f64,
    pub iterations: usize,
    pub pricing_calls: usize,
    pub lower_solves: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Target {
    /// Maximize the common floor of all free agents.
    Gamma,
    /// Maximize one agent with every other free agent held at the floor.
    Agent(usize, f64),
    /// Any lottery meeting the fixed values.
    Feasible,
}

struct Master {
    program: LinearProgram,
    rows: Vec<usize>,
    lambda_base: usize,
}

fn build(state: &ColGenState, scale: &AgentScale, target: Target, band: f64) -> Master {
    let mut lp = LinearProgram::new(true);
    let gamma = (target == Target::Gamma).then(|| lp.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY, false));
    let lambda_base = lp.cols.len();
    for s in state.pool.solutions() {
        let cost = match target {
            Target::Agent(j, _) => scale.value(j, s.x[j]),
            _ => 0.0,
        };
        lp.add_col(cost, 0.0, f64::INFINITY, false);
    }
    let coeffs = |i: usize| -> Vec<(usize, f64)> {
        state
            .pool
            .solutions()
            .iter()
            .enumerate()
            .map(|(s, sol)| (lambda_base + s, scale.value(i, sol.x[i])))
            .collect()
    };
    let mut rows = Vec::new();
    for &i in &state.free {
        match target {
            Target::Gamma => {
                let mut c = coeffs(i);
                c.push((gamma.expect("gamma column"), -1.0));
                lp.add_row(c, 0.0, f64::INFINITY);
            }
            Target::Agent(j, _) if j == i => continue,
            Target::Agent(_, floor) => {
                lp.add_row(coeffs(i), floor, f64::INFINITY);
            }
            Target::Feasible => continue,
        }
        rows.push(i);
    }
    for &(i, v) in &state.fixed {
        lp.add_row(coeffs(i), v - band, f64::INFINITY);
        rows.push(i);
    }
    let n_cols = state.pool.len();
    lp.add_row((0..n_cols).map(|s| (lambda_base + s, 1.0)).collect(), 1.0, 1.0);
    Master { program: lp, rows, lambda_base }
}

/// Solves the restricted master for `target`, adding priced columns until
/// none has positive reduced cost. Returns the objective and the weights.
fn solve_priced(
    solver: &mut Solver,
    set: &OptimalSet,
    scale: &AgentScale,
    state: &mut ColGenState,
    target: Target,
    opts: &LeximinOptions,
) -> Result<(f64, Vec<f64>)> {
    let n = set.n_agents();
    loop {
        let master = build(state, scale, target, opts.fix_band);
        let sol = solver.solve_lp(&master.program)?;
        let lambda: Vec<f64> = sol.values[master.lambda_base..].iter().map(|v| v.max(0.0)).collect();
        if target == Target::Feasible {
            return Ok((sol.objective, lambda));
        }
        let conv = *sol.row_duals.last().expect("convexity row");
        // reduced cost of column x: c(x) - sum_r y_r a_r(x) - y_conv
        let mut weights = vec![0.0; n];
        let mut constant = -conv;
        state.mu = vec![0.0; n];
        for (&i, &y) in master.rows.iter().zip(&sol.row_duals) {
            weights[i] -= y * scale.scale[i];
            constant += y * scale.scale[i] * scale.offset[i];
            state.mu[i] = y;
        }
        if let Target::Agent(j, _) = target {
            weights[j] += scale.scale[j];
            constant -= scale.scale[j] * scale.offset[j];
        }
        state.rho = conv;
        state.pricing_calls += 1;
        let (column, rc) = solve_pricing(solver, set, &weights, constant, true)?;
        if rc <= opts.rc_tol || state.pool.len() >= opts.max_columns {
            return Ok((sol.objective, lambda));
        }
        if state.pool.insert(column).is_none() {
            log::debug!("leximin: priced column already present (rc {rc:.3e})");
            return Ok((sol.objective, lambda));
        }
    }
}

fn values(pool: &SolutionPool, scale: &AgentScale, lambda: &[f64], i: usize) -> f64 {
    lambda.iter().zip(pool.solutions()).map(|(w, s)| w * scale.value(i, s.x[i])).sum()
}

fn mix(pool: &SolutionPool, lambda: &[f64]) -> Result<(Distribution, Lottery)> {
    let total: f64 = lambda.iter().sum();
    let lottery = Lottery(lambda.iter().map(|w| w / total).collect());
    Ok((lottery.mix(pool)?, lottery))
}

fn start(set: &OptimalSet, scale: &AgentScale, init_pool: &SolutionPool) -> Result<ColGenState> {
    if init_pool.is_empty() {
        return Err(FairError::EmptyPool);
    }
    scale.check_coverage(init_pool, 1e-9)?;
    let mut pool = SolutionPool::new(set.z_star);
    for s in init_pool.solutions() {
        pool.insert(s.clone());
    }
    Ok(ColGenState { pool, free: scale.agents.clone(), ..Default::default() })
}

/// The leximin distribution over the agents of `scale`, by column generation.
///
/// `init_pool` must give every agent a positive value in some column, which a
/// greedy cover (or the bound witnesses, for cardinal instances) provides.
pub fn leximin(
    solver: &mut Solver,
    set: &OptimalSet,
    scale: &AgentScale,
    init_pool: &SolutionPool,
    opts: &LeximinOptions,
) -> Result<RuleReport> {
    let clock = Instant::now();
    let omega = solver.omega();
    let mut state = start(set, scale, init_pool)?;
    let mut first_gamma = None;

    while !state.free.is_empty() {
        state.iterations += 1;
        let (gamma, lambda) = solve_priced(solver, set, scale, &mut state, Target::Gamma, opts)?;
        state.gamma = gamma;
        first_gamma.get_or_insert(gamma);

        // agents seen strictly above the floor in any master solution cannot be tight
        let mut above: Vec<bool> = state
            .free
            .iter()
            .map(|&j| values(&state.pool, scale, &lambda, j) > gamma + omega)
            .collect();
        let mut newly = Vec::new();
        let mut best_theta = (f64::INFINITY, None);
        let free = state.free.clone();
        for (k, &j) in free.iter().enumerate() {
            if above[k] {
                continue;
            }
            state.lower_solves += 1;
            let (value, lam) =
                solve_priced(solver, set, scale, &mut state, Target::Agent(j, gamma - opts.fix_band), opts)?;
            let theta = value - gamma;
            state.theta = theta;
            if theta <= omega {
                newly.push(j);
            }
            if theta < best_theta.0 {
                best_theta = (theta, Some(j));
            }
            for (kk, &jj) in free.iter().enumerate() {
                if !above[kk] && jj != j && values(&state.pool, scale, &lam, jj) > gamma + omega {
                    above[kk] = true;
                }
            }
        }
        if newly.is_empty() {
            let j = best_theta.1.unwrap_or_else(|| {
                *free
                    .iter()
                    .min_by(|&&a, &&b| {
                        values(&state.pool, scale, &lambda, a).total_cmp(&values(&state.pool, scale, &lambda, b))
                    })
                    .expect("free agents remain")
            });
            log::warn!("leximin: no agent tight within omega; fixing agent {j}");
            newly.push(j);
        }
        log::debug!("leximin iteration {}: gamma {gamma:.9} fixes {newly:?}", state.iterations);
        state.free.retain(|i| !newly.contains(i));
        state.fixed.extend(newly.into_iter().map(|j| (j, gamma)));
    }

    let (_, lambda) = solve_priced(solver, set, scale, &mut state, Target::Feasible, opts)?;
    let (d, lottery) = mix(&state.pool, &lambda)?;
    let mut report = RuleReport::new("leximin", d, state.pool, Some(lottery));
    report.iterations = state.iterations;
    report.pricing_calls = state.pricing_calls;
    report.objective_value = first_gamma;
    report.wall_time_s = clock.elapsed().as_secs_f64();
    Ok(report)
}

/// The first leximin stage: a lottery maximizing the minimum agent value.
/// The distribution is one maximizer among possibly many; the value is unique.
pub fn maximin(
    solver: &mut Solver,
    set: &OptimalSet,
    scale: &AgentScale,
    init_pool: &SolutionPool,
    opts: &LeximinOptions,
) -> Result<RuleReport> {
    let clock = Instant::now();
    let mut state = start(set, scale, init_pool)?;
    let (gamma, lambda) = if state.free.is_empty() {
        let mut w = vec![0.0; state.pool.len()];
        w[0] = 1.0;
        (f64::INFINITY, w)
    } else {
        solve_priced(solver, set, scale, &mut state, Target::Gamma, opts)?
    };
    let (d, lottery) = mix(&state.pool, &lambda)?;
    let mut report = RuleReport::new("maximin", d, state.pool, Some(lottery));
    report.iterations = 1;
    report.pricing_calls = state.pricing_calls;
    report.objective_value = Some(gamma);
    report.wall_time_s = clock.elapsed().as_secs_f64();
    Ok(report)
}
