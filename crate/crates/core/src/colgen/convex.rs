use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{FairError, Result};
use crate::model::{dot, reduce_support, solve_pricing, Distribution, Lottery, OptimalSet, SolutionPool, Solver};
use crate::report::RuleReport;

use super::AgentScale;

/// A convex function of the agent values, with first and second derivatives.
/// Each method returns `None` outside the function's domain.
pub trait SmoothConvex: Send + Sync {
    fn value(&self, a: &[f64]) -> Option<f64>;
    fn gradient(&self, a: &[f64]) -> Option<Vec<f64>>;
    fn hessian(&self, a: &[f64]) -> Option<DMatrix<f64>>;
}

#[derive(Clone)]
pub enum ConvexKind {
    /// `-sum log a_i`; same maximizer as the geometric mean.
    Nash,
    /// `(sum a_i^k)^(1/k)` for `k >= 1`.
    KNorm(f64),
    Custom(Arc<dyn SmoothConvex>),
}

impl fmt::Debug for ConvexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvexKind::Nash => write!(f, "Nash"),
            ConvexKind::KNorm(k) => write!(f, "KNorm({k})"),
            ConvexKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Nash floor: arguments below this count as leaving the domain.
pub const NASH_FLOOR: f64 = 1e-9;

/// A convex objective over the distribution, through an agent scaling.
#[derive(Clone, Debug)]
pub struct ConvexObjective {
    pub kind: ConvexKind,
    pub scale: AgentScale,
}

impl ConvexObjective {
    pub fn nash(scale: AgentScale) -> Self {
        Self { kind: ConvexKind::Nash, scale }
    }

    pub fn knorm(k: f64, scale: AgentScale) -> Result<Self> {
        if !(k >= 1.0) {
            return Err(FairError::Config(format!("k-norm needs k >= 1, got {k}")));
        }
        Ok(Self { kind: ConvexKind::KNorm(k), scale })
    }

    pub fn custom(f: Arc<dyn SmoothConvex>, scale: AgentScale) -> Self {
        Self { kind: ConvexKind::Custom(f), scale }
    }

    pub fn name(&self) -> String {
        match self.kind {
            ConvexKind::Nash => "nash".into(),
            ConvexKind::KNorm(k) => format!("knorm{k}"),
            ConvexKind::Custom(_) => "custom".into(),
        }
    }

    fn needs_interior(&self) -> bool {
        matches!(self.kind, ConvexKind::Nash)
    }

    fn value_a(&self, a: &[f64]) -> Option<f64> {
        match &self.kind {
            ConvexKind::Nash => {
                if a.iter().any(|&v| v <= 0.0) {
                    return None;
                }
                Some(-a.iter().map(|v| v.ln()).sum::<f64>())
            }
            ConvexKind::KNorm(k) => Some(a.iter().map(|v| v.max(0.0).powf(*k)).sum::<f64>().powf(1.0 / k)),
            ConvexKind::Custom(f) => f.value(a),
        }
    }

    fn gradient_a(&self, a: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            ConvexKind::Nash => {
                if a.iter().any(|&v| v <= 0.0) {
                    return None;
                }
                Some(a.iter().map(|v| -1.0 / v).collect())
            }
            ConvexKind::KNorm(k) => {
                let norm = self.value_a(a)?;
                if norm <= 0.0 {
                    return None;
                }
                Some(a.iter().map(|v| (v.max(0.0) / norm).powf(k - 1.0)).collect())
            }
            ConvexKind::Custom(f) => f.gradient(a),
        }
    }

    fn hessian_a(&self, a: &[f64]) -> Option<DMatrix<f64>> {
        let m = a.len();
        match &self.kind {
            ConvexKind::Nash => {
                if a.iter().any(|&v| v <= 0.0) {
                    return None;
                }
                Some(DMatrix::from_diagonal(&DVector::from_iterator(m, a.iter().map(|v| 1.0 / (v * v)))))
            }
            ConvexKind::KNorm(k) => {
                let norm = self.value_a(a)?;
                if norm <= 0.0 {
                    return None;
                }
                let r: Vec<f64> = a.iter().map(|v| v.max(0.0) / norm).collect();
                let g: Vec<f64> = r.iter().map(|ri| ri.powf(k - 1.0)).collect();
                let c = (k - 1.0) / norm;
                Some(DMatrix::from_fn(m, m, |i, j| {
                    let diag = if i == j { r[i].powf(k - 2.0).min(1e12) } else { 0.0 };
                    c * (diag - g[i] * g[j])
                }))
            }
            ConvexKind::Custom(f) => f.hessian(a),
        }
    }

    /// `f(d)`, or `None` outside the domain.
    pub fn value(&self, d: &[f64]) -> Option<f64> {
        self.value_a(&self.scale.column(d))
    }

    /// `df/dd_i` for every agent (zero outside the scaled agents).
    pub fn gradient(&self, d: &[f64]) -> Result<Vec<f64>> {
        let a = self.scale.column(d);
        if self.needs_interior() {
            if let Some((k, v)) = a.iter().enumerate().find(|(_, &v)| v < NASH_FLOOR) {
                return Err(FairError::GradientUndefined(format!(
                    "agent {} has value {v:.3e} below the floor",
                    self.scale.agents[k]
                )));
            }
        }
        let g = self
            .gradient_a(&a)
            .ok_or_else(|| FairError::GradientUndefined(format!("{} at {a:?}", self.name())))?;
        let mut out = vec![0.0; d.len()];
        for (k, &i) in self.scale.agents.iter().enumerate() {
            out[i] = g[k] * self.scale.scale[i];
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct ConvexOptions {
    /// Relative tolerance on the optimality condition.
    pub delta_kkt: f64,
    pub max_iter: usize,
    /// Final barrier weight of the restricted master.
    pub tau_final: f64,
}

impl Default for ConvexOptions {
    fn default() -> Self {
        Self { delta_kkt: 1e-6, max_iter: 1000, tau_final: 1e-14 }
    }
}

/// Minimizes `f(sum lambda_s a(x_s)) - tau sum log lambda_s` over the simplex
/// for a decreasing sequence of `tau`, by equality-constrained Newton steps.
fn solve_master(f: &ConvexObjective, cols: &[Vec<f64>], mut lambda: Vec<f64>, tau_final: f64) -> Result<Vec<f64>> {
    let p = cols.len();
    if p == 1 {
        return Ok(vec![1.0]);
    }
    let m = f.scale.agents.len();
    let amat = DMatrix::from_fn(m, p, |i, s| cols[s][i]);
    let mix = |lam: &[f64]| -> Vec<f64> { (amat.clone() * DVector::from_column_slice(lam)).iter().copied().collect() };
    let merit = |lam: &[f64], tau: f64| -> Option<f64> {
        if lam.iter().any(|&l| l <= 0.0) {
            return None;
        }
        let v = f.value_a(&mix(lam))?;
        Some(v - tau * lam.iter().map(|l| l.ln()).sum::<f64>())
    };

    let mut tau = 1e-2;
    loop {
        for _ in 0..200 {
            let a = mix(&lambda);
            let (Some(ga), Some(ha)) = (f.gradient_a(&a), f.hessian_a(&a)) else {
                return Err(FairError::GradientUndefined("restricted master left the domain".into()));
            };
            let ga = DVector::from_vec(ga);
            let mut g = amat.transpose() * &ga;
            let mut h = amat.transpose() * ha * &amat;
            for s in 0..p {
                g[s] -= tau / lambda[s];
                h[(s, s)] += tau / (lambda[s] * lambda[s]);
            }
            let ones = DVector::from_element(p, 1.0);
            let solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
                if let Some(ch) = h.clone().cholesky() {
                    return Some(ch.solve(rhs));
                }
                let shift = 1e-12 * h.diagonal().amax().max(1.0);
                let reg = &h + DMatrix::identity(p, p) * shift;
                reg.cholesky().map(|ch| ch.solve(rhs)).or_else(|| h.clone().lu().solve(rhs))
            };
            let (Some(u), Some(v)) = (solve(&g), solve(&ones)) else {
                return Err(FairError::Solver("singular restricted master system".into()));
            };
            let nu = -u.sum() / v.sum();
            let step = -(u + v * nu);
            let dec = -g.dot(&step);
            if !(dec > 1e-15) {
                break;
            }
            let mut t: f64 = 1.0;
            for s in 0..p {
                if step[s] < 0.0 {
                    t = t.min(-0.99 * lambda[s] / step[s]);
                }
            }
            let base = merit(&lambda, tau).expect("iterate stays in the domain");
            let slack = 4.0 * f64::EPSILON * base.abs().max(1.0);
            let mut accepted = false;
            while t > 1e-20 {
                let trial: Vec<f64> = (0..p).map(|s| lambda[s] + t * step[s]).collect();
                if let Some(val) = merit(&trial, tau) {
                    if val <= base - 1e-4 * t * dec + slack {
                        lambda = trial;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted || t * step.amax() < 1e-16 {
                break;
            }
        }
        if tau <= tau_final {
            break;
        }
        tau = (tau * 0.1).max(tau_final);
    }
    for l in lambda.iter_mut() {
        if *l < 1e-13 {
            *l = 0.0;
        }
    }
    let total: f64 = lambda.iter().sum();
    Ok(lambda.into_iter().map(|l| l / total).collect())
}

/// Largest violation of the first-order conditions over the current columns:
/// primal feasibility, `nu_s >= 0`, `nu_s lambda_s = 0` with
/// `nu_s = mu . x_s + rho` and `rho = -mu . d`.
fn kkt_residual(pool: &SolutionPool, lambda: &[f64], d: &[f64], mu: &[f64]) -> f64 {
    let rho = -dot(mu, d);
    let mut r = (lambda.iter().sum::<f64>() - 1.0).abs();
    for (s, x) in pool.xs().enumerate() {
        let nu = dot(mu, x) + rho;
        r = r.max(-lambda[s]).max(-nu).max((nu * lambda[s]).abs());
    }
    let mut mixed = vec![0.0; d.len()];
    for (w, x) in lambda.iter().zip(pool.xs()) {
        for i in 0..d.len() {
            mixed[i] += w * x[i];
        }
    }
    mixed.iter().zip(d).fold(r, |acc, (p, q)| acc.max((p - q).abs()))
}

/// Minimizes a convex objective over the convex hull of the optimal set by
/// column generation.
///
/// Each round solves the restricted master over the current columns, takes
/// `mu = grad f(d*)`, and prices `min mu . x` over the optimal set. The run
/// stops once no optimal solution improves on the columns in use.
pub fn minimize_convex(
    solver: &mut Solver,
    set: &OptimalSet,
    objective: &ConvexObjective,
    init_pool: &SolutionPool,
    opts: &ConvexOptions,
) -> Result<RuleReport> {
    let clock = Instant::now();
    if init_pool.is_empty() {
        return Err(FairError::EmptyPool);
    }
    let scale = &objective.scale;
    if objective.needs_interior() {
        scale.check_coverage(init_pool, NASH_FLOOR)?;
    }
    let mut pool = SolutionPool::new(set.z_star);
    for s in init_pool.solutions() {
        pool.insert(s.clone());
    }
    let mut report = RuleReport::new(objective.name(), Distribution(vec![]), SolutionPool::default(), None);
    if scale.agents.is_empty() {
        let lottery = Lottery(vec![1.0]);
        let single = pool.select(&[0]);
        report.distribution = lottery.mix(&single)?;
        report.pool = single;
        report.lottery = Some(lottery);
        report.condition_slack = Some(0.0);
        report.kkt_residual = Some(0.0);
        report.iterations = 1;
        return Ok(report);
    }

    let mut lambda = vec![1.0 / pool.len() as f64; pool.len()];
    let mut iterations = 0;
    let (d, mu, slack) = loop {
        iterations += 1;
        if iterations > opts.max_iter {
            return Err(FairError::NonConvergence(opts.max_iter));
        }
        let cols: Vec<Vec<f64>> = pool.xs().map(|x| scale.column(x)).collect();
        lambda = solve_master(objective, &cols, lambda, opts.tau_final)?;
        let d = Lottery(lambda.clone()).mix(&pool)?.0;
        let mu = objective.gradient(&d)?;
        let lhs = dot(&mu, &d);
        report.pricing_calls += 1;
        let (column, priced) = solve_pricing(solver, set, &mu, 0.0, false)?;
        let slack = priced - lhs;
        log::debug!("{} iteration {iterations}: f = {:?}, slack {slack:.3e}", objective.name(), objective.value(&d));
        if slack >= -opts.delta_kkt * lhs.abs().max(1.0) {
            break (d, mu, slack);
        }
        if pool.insert(column).is_none() {
            log::warn!("{}: priced column already present with slack {slack:.3e}", objective.name());
            break (d, mu, slack);
        }
        // warm start: the new column enters with a small weight
        lambda.iter_mut().for_each(|l| *l = (*l).max(1e-6) * 0.999);
        lambda.push(1e-3);
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= total);
    };

    report.kkt_residual = Some(kkt_residual(&pool, &lambda, &d, &mu));
    report.condition_slack = Some(slack);
    report.objective_value = objective.value(&d);
    let lottery = reduce_support(&pool, &Lottery(lambda))?;
    report.distribution = lottery.mix(&pool)?;
    report.lottery = Some(lottery);
    report.pool = pool;
    report.iterations = iterations;
    report.wall_time_s = clock.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::greedy_cover;
    use crate::model::{Constraint, IlpInstance, SolverConfig, VarRef};
    use crate::partition::partition_agents;

    fn run(v: Vec<f64>, w: Vec<f64>, cap: f64) -> RuleReport {
        let row = Constraint::le(w.iter().enumerate().map(|(i, &a)| (VarRef::X(i), a)), cap);
        let inst = IlpInstance::binary(v, vec![row]).unwrap();
        let mut solver = Solver::new(SolverConfig::default());
        let set = OptimalSet::solve(&mut solver, inst, Default::default()).unwrap();
        let p = partition_agents(&mut solver, &set).unwrap();
        let cover = greedy_cover(&mut solver, &set, &p.maybe).unwrap();
        let f = ConvexObjective::nash(AgentScale::identity(set.n_agents(), &p.maybe));
        minimize_convex(&mut solver, &set, &f, &cover, &ConvexOptions::default()).unwrap()
    }

    fn close(d: &Distribution, want: &[f64]) {
        for (p, q) in d.0.iter().zip(want) {
            assert!((p - q).abs() < 1e-6, "{:?} vs {want:?}", d.0);
        }
    }

    #[test]
    fn intro_nash() {
        let r = run(vec![2.0, 1.0, 1.0, 1.0], vec![2.0, 1.0, 1.0, 1.0], 3.0);
        close(&r.distribution, &[0.375, 0.75, 0.75, 0.75]);
        assert!(r.kkt_residual.unwrap() <= 1e-5);
        assert!(r.condition_slack.unwrap() >= -1e-5);
    }

    #[test]
    fn example1_nash() {
        let r = run(vec![4.0, 3.0, 1.0, 1.0], vec![4.0, 2.5, 2.5, 2.5], 6.0);
        close(&r.distribution, &[0.25, 0.75, 0.375, 0.375]);
        assert!(r.is_consistent(1e-6));
    }

    #[test]
    fn gradients_match_differences() {
        let scale = AgentScale::identity(3, &[0, 1, 2]);
        for f in [ConvexObjective::nash(scale.clone()), ConvexObjective::knorm(3.0, scale.clone()).unwrap()] {
            let d = [0.2, 0.5, 0.7];
            let g = f.gradient(&d).unwrap();
            for i in 0..3 {
                let mut hi = d;
                let mut lo = d;
                hi[i] += 1e-6;
                lo[i] -= 1e-6;
                let fd = (f.value(&hi).unwrap() - f.value(&lo).unwrap()) / 2e-6;
                assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-8));
            }
        }
    }

    #[test]
    fn nash_floor_breach() {
        let f = ConvexObjective::nash(AgentScale::identity(2, &[0, 1]));
        assert!(matches!(f.gradient(&[0.5, 0.0]), Err(FairError::GradientUndefined(_))));
    }
}
