use serde::Serialize;

use crate::model::{realizes, round_sig, Distribution, Lottery, SolutionPool};

/// The output of a distribution rule.
#[derive(Clone, Debug, Serialize)]
pub struct RuleReport {
    pub rule: String,
    pub distribution: Distribution,
    /// Columns the lottery refers to.
    #[serde(skip)]
    pub pool: SolutionPool,
    #[serde(serialize_with = "ser_lottery")]
    pub lottery: Option<Lottery>,
    /// Set when the result rests on an incomplete pool or on sampling.
    pub approximate: bool,
    pub iterations: usize,
    pub pricing_calls: usize,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kkt_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_value: Option<f64>,
    /// Draws discarded by a rejecting sampler.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejections: Option<usize>,
}

#[derive(Serialize)]
struct Weight {
    solution_id: usize,
    weight: f64,
}

fn ser_lottery<S: serde::Serializer>(l: &Option<Lottery>, s: S) -> Result<S::Ok, S::Error> {
    match l {
        None => s.serialize_none(),
        Some(l) => s.collect_seq(
            l.0.iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(solution_id, &w)| Weight { solution_id, weight: round_sig(w, 12) }),
        ),
    }
}

impl RuleReport {
    pub fn new(rule: impl Into<String>, distribution: Distribution, pool: SolutionPool, lottery: Option<Lottery>) -> Self {
        Self {
            rule: rule.into(),
            distribution,
            pool,
            lottery,
            approximate: false,
            iterations: 0,
            pricing_calls: 0,
            wall_time_s: 0.0,
            kkt_residual: None,
            condition_slack: None,
            std_error: None,
            objective_value: None,
            rejections: None,
        }
    }

    /// True when the reported lottery realizes the reported distribution.
    pub fn is_consistent(&self, tol: f64) -> bool {
        match &self.lottery {
            Some(l) => realizes(&self.pool, l, &self.distribution, tol).unwrap_or(false),
            None => false,
        }
    }

    /// Draws one pool entry according to the lottery.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Option<&crate::model::Solution> {
        let lottery = self.lottery.as_ref()?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for (s, &w) in lottery.0.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(s);
            if u < acc {
                break;
            }
        }
        last.map(|s| self.pool.get(s))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
