//! Reference rules over a complete, explicit pool.
//!
//! These do not use column generation or the solver backend: LPs go through
//! `microlp`, smooth objectives through an away-step Frank-Wolfe loop, and RSD
//! through plain enumeration of orderings.

use itertools::Itertools;
use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::error::{FairError, Result};
use crate::model::{Distribution, SolutionPool};
use crate::partition::Bounds;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BruteRule {
    Leximin,
    Maximin,
    Nash,
    KNorm(f64),
    RsdExact,
}

/// Agent values `a_i = s_i (d_i - o_i)` over the agents that vary.
struct Affine {
    agents: Vec<usize>,
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl Affine {
    fn new(pool: &SolutionPool, normalization: Option<&Bounds>, divide: bool) -> Result<Self> {
        let n = pool.n_agents().ok_or(FairError::EmptyPool)?;
        match normalization {
            Some(b) => Ok(Self {
                agents: b.varying.clone(),
                offset: b.dystopia.clone(),
                scale: (0..n).map(|i| if divide && b.range(i) > 0.0 { 1.0 / b.range(i) } else { 1.0 }).collect(),
            }),
            None => {
                let b = Bounds::from_pool(pool, 1e-9)?;
                Ok(Self { agents: b.varying, offset: vec![0.0; n], scale: vec![1.0; n] })
            }
        }
    }

    fn value(&self, i: usize, x: f64) -> f64 {
        self.scale[i] * (x - self.offset[i])
    }
}

fn check(pool: &SolutionPool) -> Result<()> {
    if pool.is_empty() {
        return Err(FairError::EmptyPool);
    }
    if !pool.complete {
        return Err(FairError::PoolIncomplete);
    }
    Ok(())
}

/// Exact rule value over the convex hull of the pool.
pub fn brute_force_rule(pool: &SolutionPool, rule: BruteRule, normalization: Option<&Bounds>) -> Result<Distribution> {
    check(pool)?;
    match rule {
        BruteRule::Leximin => leximin(pool, &Affine::new(pool, normalization, true)?),
        BruteRule::Maximin => Ok(maximin(pool, &Affine::new(pool, normalization, true)?)?.1),
        BruteRule::Nash => frank_wolfe(pool, &Affine::new(pool, normalization, false)?, Smooth::Nash),
        BruteRule::KNorm(k) => {
            if !(k >= 1.0) {
                return Err(FairError::Config(format!("k-norm needs k >= 1, got {k}")));
            }
            frank_wolfe(pool, &Affine::new(pool, normalization, true)?, Smooth::KNorm(k))
        }
        BruteRule::RsdExact => rsd_exact(pool, normalization),
    }
}

/// `max_lambda min_i a_i(lambda)`, the value of the first leximin stage.
pub fn brute_force_maximin_value(pool: &SolutionPool, normalization: Option<&Bounds>) -> Result<f64> {
    check(pool)?;
    Ok(maximin(pool, &Affine::new(pool, normalization, true)?)?.0)
}

// ---- leximin via iterated LPs ------------------------------------------------

struct LexLp {
    problem: Problem,
    lambda: Vec<Variable>,
}

fn lex_lp(pool: &SolutionPool, aff: &Affine, objective: Option<usize>, free_floor: Option<f64>, free: &[usize], fixed: &[(usize, f64)]) -> (LexLp, Option<Variable>) {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let target = (objective.is_none() && free_floor.is_none() && !free.is_empty())
        .then(|| problem.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY)));
    let lambda: Vec<Variable> = (0..pool.len())
        .map(|s| {
            let c = objective.map_or(0.0, |j| aff.value(j, pool.get(s).x[j]));
            problem.add_var(c, (0.0, f64::INFINITY))
        })
        .collect();
    let row = |i: usize| -> Vec<(Variable, f64)> {
        lambda.iter().enumerate().map(|(s, &l)| (l, aff.value(i, pool.get(s).x[i]))).collect()
    };
    for &i in free {
        let mut r = row(i);
        match (target, free_floor) {
            (Some(t), _) => {
                r.push((t, -1.0));
                problem.add_constraint(r, ComparisonOp::Ge, 0.0);
            }
            (None, Some(floor)) => problem.add_constraint(r, ComparisonOp::Ge, floor),
            (None, None) => {}
        }
    }
    for &(i, v) in fixed {
        problem.add_constraint(row(i), ComparisonOp::Ge, v - 1e-9);
    }
    problem.add_constraint(lambda.iter().map(|&l| (l, 1.0)), ComparisonOp::Eq, 1.0);
    (LexLp { problem, lambda }, target)
}

fn solve_lex(lp: &LexLp) -> Result<(f64, Vec<f64>)> {
    let sol = lp
        .problem
        .solve()
        .map_err(|e| FairError::Solver(format!("microlp: {e:?}")))?
        .into_solution()
        .map_err(|_| FairError::TimeLimit)?;
    Ok((sol.objective(), lp.lambda.iter().map(|&l| sol.var_value(l).max(0.0)).collect()))
}

fn mix(pool: &SolutionPool, lambda: &[f64]) -> Distribution {
    let n = pool.n_agents().unwrap_or(0);
    let total: f64 = lambda.iter().sum();
    let mut d = vec![0.0; n];
    for (s, &w) in lambda.iter().enumerate() {
        for i in 0..n {
            d[i] += w / total * pool.get(s).x[i];
        }
    }
    Distribution(d)
}

fn maximin(pool: &SolutionPool, aff: &Affine) -> Result<(f64, Distribution)> {
    if aff.agents.is_empty() {
        return Ok((f64::INFINITY, Distribution(pool.get(0).x.clone())));
    }
    let (lp, _) = lex_lp(pool, aff, None, None, &aff.agents, &[]);
    let (t, lambda) = solve_lex(&lp)?;
    Ok((t, mix(pool, &lambda)))
}

fn leximin(pool: &SolutionPool, aff: &Affine) -> Result<Distribution> {
    let mut free = aff.agents.clone();
    let mut fixed: Vec<(usize, f64)> = vec![];
    while !free.is_empty() {
        let (lp, _) = lex_lp(pool, aff, None, None, &free, &fixed);
        let (t, lambda) = solve_lex(&lp)?;
        let mut newly = vec![];
        for &j in &free {
            let others: Vec<usize> = free.iter().copied().filter(|&i| i != j).collect();
            let (lp, _) = lex_lp(pool, aff, Some(j), Some(t - 1e-9), &others, &fixed);
            let (best, _) = solve_lex(&lp)?;
            if best <= t + 1e-7 {
                newly.push(j);
            }
        }
        if newly.is_empty() {
            // numerical fallback: fix the worst-off agent of the stage solution
            let d = mix(pool, &lambda);
            let j = *free
                .iter()
                .min_by(|&&a, &&b| aff.value(a, d.0[a]).total_cmp(&aff.value(b, d.0[b])))
                .expect("free is nonempty");
            newly.push(j);
        }
        free.retain(|i| !newly.contains(i));
        fixed.extend(newly.into_iter().map(|j| (j, t)));
    }
    let (lp, _) = lex_lp(pool, aff, None, None, &[], &fixed);
    let (_, lambda) = solve_lex(&lp)?;
    Ok(mix(pool, &lambda))
}

// ---- smooth objectives via away-step Frank-Wolfe -------------------------------

#[derive(Clone, Copy)]
enum Smooth {
    Nash,
    KNorm(f64),
}

impl Smooth {
    /// Gradient with respect to `a` (over the listed agents), or `None` outside the domain.
    fn grad(&self, a: &[f64]) -> Option<Vec<f64>> {
        match *self {
            Smooth::Nash => {
                if a.iter().any(|&v| v <= 0.0) {
                    return None;
                }
                Some(a.iter().map(|&v| -1.0 / v).collect())
            }
            Smooth::KNorm(k) => {
                let s: f64 = a.iter().map(|&v| v.max(0.0).powf(k)).sum();
                if s <= 0.0 {
                    return None;
                }
                let norm = s.powf(1.0 / k);
                Some(a.iter().map(|&v| (v.max(0.0) / norm).powf(k - 1.0)).collect())
            }
        }
    }
}

fn frank_wolfe(pool: &SolutionPool, aff: &Affine, f: Smooth) -> Result<Distribution> {
    let m = aff.agents.len();
    if m == 0 {
        return Ok(Distribution(pool.get(0).x.clone()));
    }
    // columns in a-space
    let cols: Vec<Vec<f64>> = pool
        .xs()
        .map(|x| aff.agents.iter().map(|&i| aff.value(i, x[i])).collect())
        .collect();
    let ns = cols.len();
    let mut lambda = vec![1.0 / ns as f64; ns];
    let mix_a = |lambda: &[f64]| -> Vec<f64> {
        let mut a = vec![0.0; m];
        for (s, &w) in lambda.iter().enumerate() {
            if w > 0.0 {
                for i in 0..m {
                    a[i] += w * cols[s][i];
                }
            }
        }
        a
    };
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(p, q)| p * q).sum() };

    let mut a = mix_a(&lambda);
    let mut converged = false;
    for _ in 0..500_000 {
        let g = f.grad(&a).ok_or_else(|| FairError::GradientUndefined("pool does not cover every agent".into()))?;
        let ga = dot(&g, &a);
        let scores: Vec<f64> = cols.iter().map(|c| dot(&g, c)).collect();
        let fw = (0..ns).min_by(|&p, &q| scores[p].total_cmp(&scores[q])).expect("nonempty pool");
        let aw = (0..ns)
            .filter(|&s| lambda[s] > 0.0)
            .max_by(|&p, &q| scores[p].total_cmp(&scores[q]))
            .expect("nonempty support");
        let gap = ga - scores[fw];
        if gap <= 1e-13 {
            converged = true;
            break;
        }
        let away_gain = scores[aw] - ga;
        let (dir, tmax, away): (Vec<f64>, f64, bool) = if gap >= away_gain {
            ((0..m).map(|i| cols[fw][i] - a[i]).collect(), 1.0, false)
        } else {
            let la = lambda[aw];
            ((0..m).map(|i| a[i] - cols[aw][i]).collect(), la / (1.0 - la), true)
        };
        let slope = |t: f64| -> f64 {
            let p: Vec<f64> = (0..m).map(|i| a[i] + t * dir[i]).collect();
            f.grad(&p).map_or(f64::INFINITY, |g| dot(&g, &dir))
        };
        let t = if slope(tmax) <= 0.0 {
            tmax
        } else {
            let (mut lo, mut hi) = (0.0, tmax);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        if away {
            lambda.iter_mut().for_each(|w| *w *= 1.0 + t);
            lambda[aw] -= t;
            if t >= tmax {
                lambda[aw] = 0.0;
            }
        } else {
            lambda.iter_mut().for_each(|w| *w *= 1.0 - t);
            lambda[fw] += t;
        }
        lambda.iter_mut().for_each(|w| *w = w.max(0.0));
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|w| *w /= total);
        a = mix_a(&lambda);
    }
    if !converged {
        return Err(FairError::NonConvergence(500_000));
    }
    Ok(mix(pool, &lambda))
}

// ---- RSD by enumerating orderings -----------------------------------------------

fn rsd_exact(pool: &SolutionPool, normalization: Option<&Bounds>) -> Result<Distribution> {
    let agents = Affine::new(pool, normalization, false)?.agents;
    let n = pool.n_agents().unwrap_or(0);
    if agents.len() > 8 {
        return Err(FairError::TooLargeForExact { agents: agents.len(), limit: 8 });
    }
    let mut total = vec![0.0; n];
    let mut count = 0usize;
    for sigma in agents.iter().copied().permutations(agents.len()) {
        let mut alive: Vec<usize> = (0..pool.len()).collect();
        for &i in &sigma {
            let best = alive.iter().map(|&s| pool.get(s).x[i]).fold(f64::NEG_INFINITY, f64::max);
            alive.retain(|&s| pool.get(s).x[i] >= best - 1e-9);
        }
        let x = &pool.get(alive[0]).x;
        for i in 0..n {
            total[i] += x[i];
        }
        count += 1;
    }
    Ok(Distribution(total.into_iter().map(|v| v / count as f64).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> SolutionPool {
        SolutionPool::from_xs(
            [vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]],
            4.0,
            true,
        )
    }

    fn intro() -> SolutionPool {
        SolutionPool::from_xs(
            [
                vec![1.0, 1.0, 0.0, 0.0],
                vec![1.0, 0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0, 1.0],
                vec![0.0, 1.0, 1.0, 1.0],
            ],
            3.0,
            true,
        )
    }

    fn close(a: &Distribution, b: &[f64], tol: f64) {
        for (p, q) in a.0.iter().zip(b) {
            assert!((p - q).abs() < tol, "{:?} vs {:?}", a.0, b);
        }
    }

    #[test]
    fn example1_rules() {
        let pool = example1();
        close(&brute_force_rule(&pool, BruteRule::Leximin, None).unwrap(), &[1. / 3., 2. / 3., 1. / 3., 1. / 3.], 1e-7);
        close(&brute_force_rule(&pool, BruteRule::Nash, None).unwrap(), &[0.25, 0.75, 0.375, 0.375], 1e-6);
        close(&brute_force_rule(&pool, BruteRule::RsdExact, None).unwrap(), &[0.25, 0.75, 0.375, 0.375], 1e-12);
        assert!((brute_force_maximin_value(&pool, None).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn intro_rules() {
        let pool = intro();
        close(&brute_force_rule(&pool, BruteRule::Leximin, None).unwrap(), &[0.6; 4], 1e-7);
        close(&brute_force_rule(&pool, BruteRule::Nash, None).unwrap(), &[0.375, 0.75, 0.75, 0.75], 1e-6);
    }

    #[test]
    fn incomplete_pool_rejected() {
        let mut pool = example1();
        pool.complete = false;
        assert!(matches!(brute_force_rule(&pool, BruteRule::Nash, None), Err(FairError::PoolIncomplete)));
    }

    #[test]
    fn knorm_one_is_linear() {
        // L_1 over the pool is minimized by the sparsest solution
        let d = brute_force_rule(&example1(), BruteRule::KNorm(1.0), None).unwrap();
        close(&d, &[1.0, 0.0, 0.0, 0.0], 1e-6);
    }
}
