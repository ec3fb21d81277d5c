use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{field, records};
use crate::error::{FairError, Result};
use crate::model::{Constraint, Domain, IlpInstance, PreferenceMode, VarRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BloodType {
    O,
    A,
    B,
    AB,
}

impl BloodType {
    pub const ALL: [BloodType; 4] = [BloodType::O, BloodType::A, BloodType::B, BloodType::AB];

    /// Whether a donor of this type can give to a patient of type `patient`.
    pub fn donates_to(self, patient: BloodType) -> bool {
        matches!(
            (self, patient),
            (BloodType::O, _) | (BloodType::A, BloodType::A | BloodType::AB) | (BloodType::B, BloodType::B | BloodType::AB) | (BloodType::AB, BloodType::AB)
        )
    }
}

/// Sampler settings. The defaults approximate published US donor statistics
/// and are not calibrated against any particular instance set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KidneyParams {
    /// Frequencies of O, A, B, AB.
    pub blood_types: [f64; 4],
    /// `(probability, PRA)` tiers for patients.
    pub pra_tiers: Vec<(f64, f64)>,
    /// Redraw pairs until the donor cannot give to its own patient.
    pub only_incompatible: bool,
    /// `Some(true)` makes every arc exist, `Some(false)` none.
    pub force_compatibility: Option<bool>,
    pub max_cycle_len: usize,
}

impl Default for KidneyParams {
    fn default() -> Self {
        Self {
            blood_types: [0.4814, 0.3373, 0.1428, 0.0385],
            pra_tiers: vec![(0.7019, 0.05), (0.2, 0.45), (0.0981, 0.9)],
            only_incompatible: true,
            force_compatibility: None,
            max_cycle_len: 3,
        }
    }
}

/// Incompatible patient-donor pairs and the exchange cycles among them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KidneyInstance {
    pub n_pairs: usize,
    /// `(a, b)`: the donor of pair `a` can give to the patient of pair `b`.
    pub arcs: Vec<(usize, usize)>,
    pub max_cycle_len: usize,
    pub cycles: Vec<Vec<usize>>,
}

impl KidneyInstance {
    pub fn new(n_pairs: usize, mut arcs: Vec<(usize, usize)>, max_cycle_len: usize) -> Result<Self> {
        if let Some(&(a, b)) = arcs.iter().find(|&&(a, b)| a >= n_pairs || b >= n_pairs || a == b) {
            return Err(FairError::InvalidInstance(format!("bad arc {a} -> {b} for {n_pairs} pairs")));
        }
        arcs.sort_unstable();
        arcs.dedup();
        let cycles = enumerate_cycles(n_pairs, &arcs, max_cycle_len);
        Ok(Self { n_pairs, arcs, max_cycle_len, cycles })
    }

    /// Header line `n_pairs`, then one `from to` arc per line, 0-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = records(text);
        let (line, head) = lines.next().ok_or_else(|| FairError::Parse("empty kidney file".into()))?;
        if head.len() != 1 {
            return Err(FairError::Parse(format!("line {line}: expected the pair count")));
        }
        let n: usize = field(line, head[0])?;
        let mut arcs = Vec::new();
        for (line, rec) in lines {
            if rec.len() != 2 {
                return Err(FairError::Parse(format!("line {line}: expected `from to`")));
            }
            arcs.push((field(line, rec[0])?, field(line, rec[1])?));
        }
        Self::new(n, arcs, 3)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n_pairs);
        for (a, b) in &self.arcs {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }
}

/// Simple directed cycles of length `2..=max_len`, each listed once starting
/// from its smallest node.
pub fn enumerate_cycles(n: usize, arcs: &[(usize, usize)], max_len: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in arcs {
        adj[a][b] = true;
    }
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(max_len);
    for s in 0..n {
        path.clear();
        path.push(s);
        extend(&adj, s, max_len, &mut path, &mut out);
    }
    out
}

fn extend(adj: &[Vec<bool>], start: usize, max_len: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let last = *path.last().unwrap();
    if path.len() >= 2 && adj[last][start] {
        out.push(path.clone());
    }
    if path.len() == max_len {
        return;
    }
    for next in start + 1..adj.len() {
        if adj[last][next] && !path.contains(&next) {
            path.push(next);
            extend(adj, start, max_len, path, out);
            path.pop();
        }
    }
}

fn draw_type<R: Rng>(rng: &mut R, freq: &[f64; 4]) -> BloodType {
    let total: f64 = freq.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &f) in freq.iter().enumerate() {
        if u < f {
            return BloodType::ALL[k];
        }
        u -= f;
    }
    BloodType::AB
}

fn draw_pra<R: Rng>(rng: &mut R, tiers: &[(f64, f64)]) -> f64 {
    let total: f64 = tiers.iter().map(|t| t.0).sum();
    let mut u = rng.random::<f64>() * total;
    for &(p, pra) in tiers {
        if u < p {
            return pra;
        }
        u -= p;
    }
    tiers.last().map_or(0.0, |t| t.1)
}

/// Random pairs with arcs from blood-type compatibility and a crossmatch that
/// succeeds with probability `1 - PRA` of the receiving patient.
pub fn gen_kidney(n_pairs: usize, seed: u64, params: &KidneyParams) -> Result<KidneyInstance> {
    if n_pairs < 2 {
        return Err(FairError::Config("a kidney instance needs at least two pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arcs = match params.force_compatibility {
        Some(true) => (0..n_pairs).flat_map(|a| (0..n_pairs).filter(move |&b| b != a).map(move |b| (a, b))).collect(),
        Some(false) => Vec::new(),
        None => {
            let mut pairs = Vec::with_capacity(n_pairs);
            while pairs.len() < n_pairs {
                let patient = draw_type(&mut rng, &params.blood_types);
                let donor = draw_type(&mut rng, &params.blood_types);
                let pra = draw_pra(&mut rng, &params.pra_tiers);
                let compatible = donor.donates_to(patient) && rng.random::<f64>() >= pra;
                if !(params.only_incompatible && compatible) {
                    pairs.push((patient, donor, pra));
                }
            }
            let mut arcs = Vec::new();
            for (a, &(_, donor, _)) in pairs.iter().enumerate() {
                for (b, &(patient, _, pra)) in pairs.iter().enumerate() {
                    if a != b && donor.donates_to(patient) && rng.random::<f64>() >= pra {
                        arcs.push((a, b));
                    }
                }
            }
            arcs
        }
    };
    KidneyInstance::new(n_pairs, arcs, params.max_cycle_len)
}

/// Cycle formulation: one binary per cycle, `x_v` equal to the number of
/// chosen cycles through pair `v`, objective the number of transplants.
pub fn build_kidney_ilp(inst: &KidneyInstance) -> Result<IlpInstance> {
    let n = inst.n_pairs;
    let mut through = vec![Vec::new(); n];
    for (c, cycle) in inst.cycles.iter().enumerate() {
        for &v in cycle {
            through[v].push(c);
        }
    }
    let rows = through
        .iter()
        .enumerate()
        .map(|(v, cs)| Constraint::eq(cs.iter().map(|&c| (VarRef::Y(c), 1.0)).chain([(VarRef::X(v), -1.0)]), 0.0))
        .collect();
    let m = inst.cycles.len();
    IlpInstance::new(
        vec![1.0; n],
        vec![0.0; m],
        rows,
        vec![Domain::BINARY; n],
        vec![Domain::BINARY; m],
        PreferenceMode::Dichotomous,
    )
}
