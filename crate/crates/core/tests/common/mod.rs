//! Fixtures and solver-free reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fairip_core::model::{Constraint, IlpInstance, Relation, SolutionPool, VarRef};
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn example1() -> IlpInstance {
    IlpInstance::binary(
        vec![4.0, 3.0, 1.0, 1.0],
        vec![Constraint::le(
            [(VarRef::X(0), 4.0), (VarRef::X(1), 2.5), (VarRef::X(2), 2.5), (VarRef::X(3), 2.5)],
            6.0,
        )],
    )
    .unwrap()
}

pub fn intro() -> IlpInstance {
    IlpInstance::binary(
        vec![2.0, 1.0, 1.0, 1.0],
        vec![Constraint::le(
            [(VarRef::X(0), 2.0), (VarRef::X(1), 1.0), (VarRef::X(2), 1.0), (VarRef::X(3), 1.0)],
            3.0,
        )],
    )
    .unwrap()
}

pub fn ifs_outcomes() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]
}

/// Random binary instance with integer objective, alternating between a
/// knapsack shape and a few mixed-sign rows.
pub fn random_instance(seed: u64) -> IlpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=10);
    if seed % 2 == 0 {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(1..=4) as f64).collect();
        let v: Vec<f64> = a.iter().map(|&w| if rng.random_bool(0.6) { w } else { rng.random_range(1..=4) as f64 }).collect();
        let cap = (a.iter().sum::<f64>() * rng.random_range(0.3..0.7)).floor();
        IlpInstance::binary(v, vec![Constraint::le(a.iter().enumerate().map(|(i, &w)| (VarRef::X(i), w)), cap)])
            .unwrap()
    } else {
        let v: Vec<f64> = (0..n).map(|_| [0.0, 1.0, 1.0, 2.0][rng.random_range(0..4)]).collect();
        let rows = (0..rng.random_range(1..=3))
            .map(|_| {
                let coeffs: Vec<(VarRef, f64)> = (0..n)
                    .map(|i| (VarRef::X(i), [-1.0, 0.0, 1.0, 1.0, 2.0][rng.random_range(0..5)]))
                    .collect();
                Constraint::le(coeffs, rng.random_range(1..=n as i32) as f64)
            })
            .collect();
        IlpInstance::binary(v, rows).unwrap()
    }
}

/// All 0/1 vectors of maximum objective, by exhaustive scan.
pub fn scan_optimal(inst: &IlpInstance) -> (f64, Vec<Vec<f64>>) {
    assert_eq!(inst.n_aux(), 0);
    let n = inst.n_agents();
    let mut best = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
        if !inst.rows().iter().all(|r| satisfied(r, &x)) {
            continue;
        }
        let z: f64 = inst.agent_objective().iter().zip(&x).map(|(a, b)| a * b).sum();
        if z > best + 1e-9 {
            best = z;
            out.clear();
        }
        if (z - best).abs() <= 1e-9 {
            out.push(x);
        }
    }
    (best, out)
}

fn satisfied(row: &Constraint, x: &[f64]) -> bool {
    let lhs: f64 = row
        .coeffs()
        .iter()
        .map(|&(var, a)| match var {
            VarRef::X(i) => a * x[i],
            VarRef::Y(_) => unreachable!(),
        })
        .sum();
    match row.rel {
        Relation::Le => lhs <= row.rhs + 1e-9,
        Relation::Ge => lhs >= row.rhs - 1e-9,
        Relation::Eq => (lhs - row.rhs).abs() <= 1e-9,
    }
}

pub fn pool_of(xs: &[Vec<f64>], z: f64) -> SolutionPool {
    SolutionPool::from_xs(xs.iter().cloned(), z, true)
}

/// `(yes, no, maybe)` read off explicit outcome vectors.
pub fn split(xs: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let n = xs[0].len();
    let (mut yes, mut no, mut maybe) = (vec![], vec![], vec![]);
    for i in 0..n {
        let ones = xs.iter().filter(|x| x[i] > 0.5).count();
        match ones {
            k if k == xs.len() => yes.push(i),
            0 => no.push(i),
            _ => maybe.push(i),
        }
    }
    (yes, no, maybe)
}

/// The serial dictatorship outcome over explicit outcomes for one order.
pub fn dictate(xs: &[Vec<f64>], order: &[usize]) -> Vec<f64> {
    let mut alive: Vec<&Vec<f64>> = xs.iter().collect();
    for &i in order {
        if alive.iter().any(|x| x[i] > 0.5) {
            alive.retain(|x| x[i] > 0.5);
        }
    }
    alive[0].clone()
}

/// Random serial dictatorship by walking every order.
pub fn rsd_by_orders(xs: &[Vec<f64>], agents: &[usize]) -> Vec<f64> {
    let n = xs[0].len();
    let mut d = vec![0.0; n];
    let mut count = 0.0;
    for order in agents.iter().copied().permutations(agents.len()) {
        let x = dictate(xs, &order);
        for i in 0..n {
            d[i] += x[i];
        }
        count += 1.0;
    }
    d.iter().map(|v| v / count).collect()
}

/// Optimal utility vectors of a tardiness instance over all job orders.
pub fn tardiness_optimal_utilities(jobs: &[(u32, u32)]) -> (f64, Vec<Vec<f64>>) {
    let n = jobs.len();
    let mut by_key: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    let mut best = f64::NEG_INFINITY;
    for order in (0..n).permutations(n) {
        let mut u = vec![0.0; n];
        let mut t = 0;
        for &j in &order {
            t += jobs[j].0;
            u[j] = -(t.saturating_sub(jobs[j].1) as f64);
        }
        let total: f64 = u.iter().sum();
        if total > best + 1e-9 {
            best = total;
            by_key.clear();
        }
        if (total - best).abs() <= 1e-9 {
            by_key.insert(u.iter().map(|&v| v as i64).collect(), u);
        }
    }
    (best, by_key.into_values().collect())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
