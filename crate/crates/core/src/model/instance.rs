use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::backend::LinearProgram;
use crate::error::{FairError, Result};

/// A decision variable: an agent variable `x_i` or an auxiliary variable `y_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarRef {
    X(usize),
    Y(usize),
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRef::X(i) => write!(f, "x{i}"),
            VarRef::Y(j) => write!(f, "y{j}"),
        }
    }
}

impl FromStr for VarRef {
    type Err = FairError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || FairError::Parse(format!("bad variable name {s:?}"));
        let (head, idx) = s.split_at(s.char_indices().nth(1).map(|(i, _)| i).ok_or_else(bad)?);
        let idx: usize = idx.parse().map_err(|_| bad())?;
        match head {
            "x" => Ok(VarRef::X(idx)),
            "y" => Ok(VarRef::Y(idx)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

/// One linear row `sum coeff * var  (<= | = | >=)  rhs`.
///
/// Coefficients are kept sorted by variable with duplicates merged, which makes
/// structural equality meaningful.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    coeffs: Vec<(VarRef, f64)>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: impl IntoIterator<Item = (VarRef, f64)>, rel: Relation, rhs: f64) -> Self {
        let mut merged: BTreeMap<VarRef, f64> = BTreeMap::new();
        for (var, a) in coeffs {
            *merged.entry(var).or_insert(0.0) += a;
        }
        Self { coeffs: merged.into_iter().filter(|&(_, a)| a != 0.0).collect(), rel, rhs }
    }

    pub fn le(coeffs: impl IntoIterator<Item = (VarRef, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Le, rhs)
    }

    pub fn ge(coeffs: impl IntoIterator<Item = (VarRef, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Ge, rhs)
    }

    pub fn eq(coeffs: impl IntoIterator<Item = (VarRef, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Eq, rhs)
    }

    /// `x_i = value`
    pub fn fix_agent(agent: usize, value: f64) -> Self {
        Self::eq([(VarRef::X(agent), 1.0)], value)
    }

    pub fn coeffs(&self) -> &[(VarRef, f64)] {
        &self.coeffs
    }

    pub fn activity(&self, x: &[f64], y: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|&(var, a)| match var {
                VarRef::X(i) => a * x[i],
                VarRef::Y(j) => a * y[j],
            })
            .sum()
    }

    pub fn is_satisfied(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        let lhs = self.activity(x, y);
        match self.rel {
            Relation::Le => lhs <= self.rhs + tol,
            Relation::Ge => lhs >= self.rhs - tol,
            Relation::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self.rel {
            Relation::Le => (f64::NEG_INFINITY, self.rhs),
            Relation::Ge => (self.rhs, f64::INFINITY),
            Relation::Eq => (self.rhs, self.rhs),
        }
    }
}

/// Variable domain `[lo, hi]`, optionally integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub integer: bool,
}

impl Domain {
    pub const BINARY: Domain = Domain { lo: 0.0, hi: 1.0, integer: true };

    pub fn continuous(lo: f64, hi: f64) -> Self {
        Self { lo, hi, integer: false }
    }

    pub fn integer(lo: f64, hi: f64) -> Self {
        Self { lo, hi, integer: true }
    }

    pub fn is_binary(&self) -> bool {
        *self == Self::BINARY
    }

    fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lo - tol
            && value <= self.hi + tol
            && (!self.integer || (value - value.round()).abs() <= tol)
    }
}

/// Whether agents care only about being selected, or about the value of their variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceMode {
    #[default]
    Dichotomous,
    Cardinal,
}

/// A linear objective over agent and auxiliary variables plus a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearObjective {
    pub agent: Vec<f64>,
    pub aux: Vec<f64>,
    pub constant: f64,
    pub maximize: bool,
}

impl LinearObjective {
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(&self.agent, x) + dot(&self.aux, y) + self.constant
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// An integer linear program whose first `n_agents` variables belong to agents.
///
/// The objective is always maximized; minimization inputs are negated when
/// they are read.
#[derive(Clone, Debug, PartialEq)]
pub struct IlpInstance {
    n_agents: usize,
    v: Vec<f64>,
    w: Vec<f64>,
    rows: Vec<Constraint>,
    agent_domains: Vec<Domain>,
    aux_domains: Vec<Domain>,
    mode: PreferenceMode,
}

impl IlpInstance {
    pub fn new(
        v: Vec<f64>,
        w: Vec<f64>,
        rows: Vec<Constraint>,
        agent_domains: Vec<Domain>,
        aux_domains: Vec<Domain>,
        mode: PreferenceMode,
    ) -> Result<Self> {
        let inst = Self { n_agents: v.len(), v, w, rows, agent_domains, aux_domains, mode };
        inst.validate()?;
        Ok(inst)
    }

    /// Binary agents only, dichotomous preferences, no auxiliary variables.
    pub fn binary(v: Vec<f64>, rows: Vec<Constraint>) -> Result<Self> {
        let n = v.len();
        Self::new(v, vec![], rows, vec![Domain::BINARY; n], vec![], PreferenceMode::Dichotomous)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(FairError::InvalidInstance(msg));
        if self.agent_domains.len() != self.n_agents {
            return invalid(format!(
                "{} agent domains for {} agents",
                self.agent_domains.len(),
                self.n_agents
            ));
        }
        if self.aux_domains.len() != self.w.len() {
            return invalid(format!(
                "{} aux domains for {} aux variables",
                self.aux_domains.len(),
                self.w.len()
            ));
        }
        if self.v.iter().chain(&self.w).any(|c| !c.is_finite()) {
            return invalid("non-finite objective coefficient".into());
        }
        for d in self.agent_domains.iter().chain(&self.aux_domains) {
            if d.lo.is_nan() || d.hi.is_nan() || d.lo > d.hi {
                return invalid(format!("empty domain [{}, {}]", d.lo, d.hi));
            }
        }
        if self.mode == PreferenceMode::Dichotomous && !self.agent_domains.iter().all(Domain::is_binary)
        {
            return invalid("dichotomous mode requires binary agent variables".into());
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return invalid(format!("row {r}: non-finite rhs"));
            }
            for &(var, a) in &row.coeffs {
                if !a.is_finite() {
                    return invalid(format!("row {r}: non-finite coefficient on {var}"));
                }
                let ok = match var {
                    VarRef::X(i) => i < self.n_agents,
                    VarRef::Y(j) => j < self.w.len(),
                };
                if !ok {
                    return invalid(format!("row {r}: variable {var} out of range"));
                }
            }
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_aux(&self) -> usize {
        self.w.len()
    }

    pub fn agent_objective(&self) -> &[f64] {
        &self.v
    }

    pub fn aux_objective(&self) -> &[f64] {
        &self.w
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn agent_domains(&self) -> &[Domain] {
        &self.agent_domains
    }

    pub fn aux_domains(&self) -> &[Domain] {
        &self.aux_domains
    }

    pub fn mode(&self) -> PreferenceMode {
        self.mode
    }

    pub fn is_dichotomous(&self) -> bool {
        self.mode == PreferenceMode::Dichotomous
    }

    pub fn objective(&self) -> LinearObjective {
        LinearObjective { agent: self.v.clone(), aux: self.w.clone(), constant: 0.0, maximize: true }
    }

    pub fn objective_value(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(&self.v, x) + dot(&self.w, y)
    }

    /// The row `v'x + w'y  rel  rhs`.
    pub fn objective_row(&self, rel: Relation, rhs: f64) -> Constraint {
        let terms = self
            .v
            .iter()
            .enumerate()
            .map(|(i, &a)| (VarRef::X(i), a))
            .chain(self.w.iter().enumerate().map(|(j, &a)| (VarRef::Y(j), a)));
        Constraint::new(terms, rel, rhs)
    }

    /// A copy with additional rows appended.
    pub fn with_rows(&self, extra: impl IntoIterator<Item = Constraint>) -> Result<Self> {
        let mut inst = self.clone();
        inst.rows.extend(extra);
        inst.validate()?;
        Ok(inst)
    }

    /// Renames agent `i` to `agent_perm[i]` and auxiliary `j` to `aux_perm[j]`,
    /// listing the rows in `row_order`.
    pub fn relabeled(&self, agent_perm: &[usize], aux_perm: &[usize], row_order: &[usize]) -> Result<Self> {
        let is_perm = |p: &[usize], n: usize| {
            let mut seen = vec![false; n];
            p.len() == n && p.iter().all(|&k| k < n && !std::mem::replace(&mut seen[k], true))
        };
        if !is_perm(agent_perm, self.n_agents) || !is_perm(aux_perm, self.w.len()) || !is_perm(row_order, self.rows.len()) {
            return Err(FairError::Config("relabeling is not a permutation".into()));
        }
        let mut inst = self.clone();
        for i in 0..self.n_agents {
            inst.v[agent_perm[i]] = self.v[i];
            inst.agent_domains[agent_perm[i]] = self.agent_domains[i];
        }
        for j in 0..self.w.len() {
            inst.w[aux_perm[j]] = self.w[j];
            inst.aux_domains[aux_perm[j]] = self.aux_domains[j];
        }
        inst.rows = row_order
            .iter()
            .map(|&r| {
                let row = &self.rows[r];
                let coeffs = row.coeffs.iter().map(|&(var, a)| match var {
                    VarRef::X(i) => (VarRef::X(agent_perm[i]), a),
                    VarRef::Y(j) => (VarRef::Y(aux_perm[j]), a),
                });
                Constraint::new(coeffs, row.rel, row.rhs)
            })
            .collect();
        Ok(inst)
    }

    pub fn with_objective(&self, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if v.len() != self.n_agents {
            return Err(FairError::DimensionMismatch { expected: self.n_agents, got: v.len() });
        }
        if w.len() != self.w.len() {
            return Err(FairError::DimensionMismatch { expected: self.w.len(), got: w.len() });
        }
        let mut inst = self.clone();
        inst.v = v;
        inst.w = w;
        inst.validate()?;
        Ok(inst)
    }

    /// True when every objective coefficient and every variable domain is integral.
    pub fn has_integer_data(&self) -> bool {
        let int = |c: &f64| (c - c.round()).abs() < 1e-12;
        self.v.iter().all(int)
            && self.w.iter().all(int)
            && self.agent_domains.iter().chain(&self.aux_domains).all(|d| d.integer)
    }

    pub fn is_feasible(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        x.len() == self.n_agents
            && y.len() == self.w.len()
            && self.agent_domains.iter().zip(x).all(|(d, &v)| d.contains(v, tol))
            && self.aux_domains.iter().zip(y).all(|(d, &v)| d.contains(v, tol))
            && self.rows.iter().all(|r| r.is_satisfied(x, y, tol))
    }

    /// Lowers the instance to backend form. Columns are agents followed by
    /// auxiliaries unless `agent_order` gives the insertion order of agents.
    pub fn to_program(&self, objective: &LinearObjective, agent_order: Option<&[usize]>) -> LinearProgram {
        let n = self.n_agents;
        let mut lp = LinearProgram::new(objective.maximize);
        let order: Vec<usize> = agent_order.map(<[usize]>::to_vec).unwrap_or_else(|| (0..n).collect());
        let mut col_of_agent = vec![0; n];
        for &i in &order {
            let d = self.agent_domains[i];
            col_of_agent[i] = lp.add_col(objective.agent[i], d.lo, d.hi, d.integer);
        }
        let aux_base = lp.cols.len();
        for (j, d) in self.aux_domains.iter().enumerate() {
            lp.add_col(objective.aux[j], d.lo, d.hi, d.integer);
        }
        for row in &self.rows {
            let coeffs = row
                .coeffs
                .iter()
                .map(|&(var, a)| match var {
                    VarRef::X(i) => (col_of_agent[i], a),
                    VarRef::Y(j) => (aux_base + j, a),
                })
                .collect();
            let (lo, hi) = row.bounds();
            lp.add_row(coeffs, lo, hi);
        }
        lp
    }

    /// Splits a backend column vector back into `(x, y)`, snapping values that
    /// sit within solver tolerance of an integer.
    pub(crate) fn split_values(&self, values: &[f64], agent_order: Option<&[usize]>) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_agents;
        let mut x = vec![0.0; n];
        match agent_order {
            Some(order) => {
                for (col, &i) in order.iter().enumerate() {
                    x[i] = values[col];
                }
            }
            None => x.copy_from_slice(&values[..n]),
        }
        let mut y = values[n..].to_vec();
        for (val, d) in x.iter_mut().zip(&self.agent_domains).chain(y.iter_mut().zip(&self.aux_domains)) {
            let r = val.round();
            if d.integer || (*val - r).abs() < 1e-7 {
                *val = r.clamp(d.lo, d.hi);
            }
            if *val == 0.0 {
                *val = 0.0; // drop negative zero
            }
        }
        (x, y)
    }
}

// ----- JSON form --------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ObjectiveJson {
    v: Vec<f64>,
    #[serde(default)]
    w: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RowJson {
    coeffs: BTreeMap<String, f64>,
    rel: Relation,
    rhs: f64,
}

#[derive(Serialize, Deserialize, Default)]
struct DomainsJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    agents: Option<Vec<DomainJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aux: Option<Vec<DomainJson>>,
}

/// `"binary"` or `{"lo": .., "hi": .., "integer": ..}`.
#[derive(Clone, Copy, Debug)]
struct DomainJson(Domain);

impl Serialize for DomainJson {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Full {
            lo: f64,
            hi: f64,
            integer: bool,
        }
        if self.0.is_binary() {
            s.serialize_str("binary")
        } else {
            Full { lo: self.0.lo, hi: self.0.hi, integer: self.0.integer }.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for DomainJson {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            Name(String),
            Full {
                #[serde(default = "neg_inf")]
                lo: f64,
                #[serde(default = "pos_inf")]
                hi: f64,
                #[serde(default)]
                integer: bool,
            },
        }
        fn neg_inf() -> f64 {
            f64::NEG_INFINITY
        }
        fn pos_inf() -> f64 {
            f64::INFINITY
        }
        match Either::deserialize(d)? {
            Either::Name(n) if n == "binary" => Ok(DomainJson(Domain::BINARY)),
            Either::Name(n) => Err(D::Error::custom(format!("unknown domain {n:?}"))),
            Either::Full { lo, hi, integer } => Ok(DomainJson(Domain { lo, hi, integer })),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SenseJson {
    #[default]
    Max,
    Min,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    n_agents: usize,
    #[serde(default)]
    aux: usize,
    objective: ObjectiveJson,
    #[serde(default, skip_serializing_if = "is_max")]
    sense: SenseJson,
    rows: Vec<RowJson>,
    #[serde(default)]
    domains: DomainsJson,
    #[serde(default)]
    mode: PreferenceMode,
}

fn is_max(s: &SenseJson) -> bool {
    *s == SenseJson::Max
}

impl Serialize for IlpInstance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = self
            .rows
            .iter()
            .map(|r| RowJson {
                coeffs: r.coeffs.iter().map(|(var, a)| (var.to_string(), *a)).collect(),
                rel: r.rel,
                rhs: r.rhs,
            })
            .collect();
        InstanceJson {
            n_agents: self.n_agents,
            aux: self.w.len(),
            objective: ObjectiveJson { v: self.v.clone(), w: self.w.clone() },
            sense: SenseJson::Max,
            rows,
            domains: DomainsJson {
                agents: Some(self.agent_domains.iter().copied().map(DomainJson).collect()),
                aux: Some(self.aux_domains.iter().copied().map(DomainJson).collect()),
            },
            mode: self.mode,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for IlpInstance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = InstanceJson::deserialize(d)?;
        let mut v = raw.objective.v;
        let mut w = raw.objective.w;
        if v.len() != raw.n_agents {
            return Err(D::Error::custom(format!("objective.v has {} entries, n_agents = {}", v.len(), raw.n_agents)));
        }
        if w.is_empty() {
            w = vec![0.0; raw.aux];
        }
        if w.len() != raw.aux {
            return Err(D::Error::custom(format!("objective.w has {} entries, aux = {}", w.len(), raw.aux)));
        }
        if raw.sense == SenseJson::Min {
            v.iter_mut().chain(w.iter_mut()).for_each(|c| *c = -*c);
        }
        let mut rows = Vec::with_capacity(raw.rows.len());
        for r in raw.rows {
            let mut coeffs = Vec::with_capacity(r.coeffs.len());
            for (name, a) in r.coeffs {
                coeffs.push((name.parse::<VarRef>().map_err(D::Error::custom)?, a));
            }
            rows.push(Constraint::new(coeffs, r.rel, r.rhs));
        }
        let agent_domains = match raw.domains.agents {
            Some(ds) => ds.into_iter().map(|d| d.0).collect(),
            None => vec![Domain::BINARY; raw.n_agents],
        };
        let aux_domains = match raw.domains.aux {
            Some(ds) => ds.into_iter().map(|d| d.0).collect(),
            None => vec![Domain::BINARY; raw.aux],
        };
        IlpInstance::new(v, w, rows, agent_domains, aux_domains, raw.mode).map_err(D::Error::custom)
    }
}

impl IlpInstance {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knapsack() -> IlpInstance {
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
    fn parses_spec_style_json() {
        let text = r#"{"n_agents": 2, "aux": 1,
            "objective": {"v": [1, 2], "w": [0.5]},
            "rows": [{"coeffs": {"x1": 2.5, "y0": 1}, "rel": "<=", "rhs": 6}],
            "mode": "dichotomous"}"#;
        let inst = IlpInstance::from_json(text).unwrap();
        assert_eq!(inst.n_agents(), 2);
        assert_eq!(inst.n_aux(), 1);
        assert_eq!(inst.rows()[0].coeffs(), &[(VarRef::X(1), 2.5), (VarRef::Y(0), 1.0)]);
        assert!(inst.aux_domains()[0].is_binary());
    }

    #[test]
    fn minimization_is_negated() {
        let text = r#"{"n_agents": 1, "objective": {"v": [3]}, "sense": "min", "rows": []}"#;
        let inst = IlpInstance::from_json(text).unwrap();
        assert_eq!(inst.agent_objective(), &[-3.0]);
    }

    #[test]
    fn rejects_out_of_range_index() {
        let text = r#"{"n_agents": 1, "objective": {"v": [1]},
            "rows": [{"coeffs": {"x4": 1}, "rel": "<=", "rhs": 1}]}"#;
        assert!(IlpInstance::from_json(text).is_err());
    }

    #[test]
    fn rejects_non_binary_dichotomous_agent() {
        let text = r#"{"n_agents": 1, "objective": {"v": [1]}, "rows": [],
            "domains": {"agents": [{"lo": 0, "hi": 3, "integer": true}]}}"#;
        assert!(IlpInstance::from_json(text).is_err());
    }

    #[test]
    fn json_round_trip() {
        let inst = knapsack();
        let back = IlpInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn var_names() {
        assert_eq!("x12".parse::<VarRef>().unwrap(), VarRef::X(12));
        assert_eq!("y0".parse::<VarRef>().unwrap(), VarRef::Y(0));
        assert!("z1".parse::<VarRef>().is_err());
        assert!("x".parse::<VarRef>().is_err());
    }

    #[test]
    fn reorders_agent_columns() {
        let inst = knapsack();
        let lp = inst.to_program(&inst.objective(), Some(&[3, 2, 1, 0]));
        assert_eq!(lp.cols[0].cost, 1.0);
        assert_eq!(lp.cols[3].cost, 4.0);
        let (x, _) = inst.split_values(&[1.0, 0.0, 0.0, 1.0], Some(&[3, 2, 1, 0]));
        assert_eq!(x, vec![1.0, 0.0, 0.0, 1.0]);
        let (x, _) = inst.split_values(&[0.0, 1.0, 0.0, 0.0], Some(&[3, 2, 1, 0]));
        assert_eq!(x, vec![0.0, 0.0, 1.0, 0.0]);
    }
}
