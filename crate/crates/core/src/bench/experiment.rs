use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fairness_metrics, min_ratio, nash_ratio, prepare, run_rule, Rule, RuleOptions};
use crate::error::{FairError, Result};
use crate::instances::{
    build_kidney_ilp, build_tardiness_ilp, gen_kidney, gen_tardiness, KidneyInstance, KidneyParams, TardinessInstance,
};
use crate::model::{IlpInstance, NearOptConfig, Solver, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// Kidney exchange arc list.
    Ke,
    /// Tardiness job list.
    Tt,
    /// Model JSON.
    IlpJson,
}

impl Format {
    /// Guesses from the file extension, defaulting to model JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ke") => Format::Ke,
            Some("tt") => Format::Tt,
            _ => Format::IlpJson,
        }
    }
}

pub fn load_instance(path: &Path, format: Format) -> Result<IlpInstance> {
    let text = std::fs::read_to_string(path)?;
    match format {
        Format::Ke => build_kidney_ilp(&KidneyInstance::parse(&text)?),
        Format::Tt => build_tardiness_ilp(&TardinessInstance::parse(&text)?),
        Format::IlpJson => IlpInstance::from_json(&text),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSource {
    Kidney {
        pairs_min: usize,
        pairs_max: usize,
        count: usize,
        #[serde(default)]
        params: KidneyParams,
    },
    Tardiness {
        n: usize,
        beta: f64,
        count: usize,
    },
    Files {
        paths: Vec<PathBuf>,
        format: Option<Format>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub rules: Vec<String>,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_csv: Option<PathBuf>,
    #[serde(default)]
    pub out_json: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_cap() -> usize {
    crate::enumeration::DEFAULT_CAP
}

fn default_trials() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Vec<Rule>> {
        if self.rules.is_empty() {
            return Err(FairError::Config("no rules to run".into()));
        }
        NearOptConfig { epsilon: self.epsilon, absolute_slack: 0.0 }.validate()?;
        match &self.source {
            InstanceSource::Kidney { pairs_min, pairs_max, .. } if pairs_min > pairs_max || *pairs_min < 2 => {
                return Err(FairError::Config(format!("bad pair range {pairs_min}..={pairs_max}")))
            }
            InstanceSource::Files { paths, .. } => {
                if let Some(p) = paths.iter().find(|p| !p.exists()) {
                    return Err(FairError::Config(format!("{} does not exist", p.display())));
                }
            }
            _ => {}
        }
        self.rules.iter().map(|r| r.parse()).collect()
    }

    /// Named instances in run order.
    pub fn instances(&self) -> Result<Vec<(String, IlpInstance)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match &self.source {
            InstanceSource::Kidney { pairs_min, pairs_max, count, params } => (0..*count)
                .map(|k| {
                    let n = rng.random_range(*pairs_min..=*pairs_max);
                    let seed = self.seed.wrapping_add(k as u64);
                    Ok((format!("ke-{n}-s{seed}"), build_kidney_ilp(&gen_kidney(n, seed, params)?)?))
                })
                .collect(),
            InstanceSource::Tardiness { n, beta, count } => (0..*count)
                .map(|k| {
                    let seed = self.seed.wrapping_add(k as u64);
                    Ok((format!("tt-{n}-b{beta}-s{seed}"), build_tardiness_ilp(&gen_tardiness(*n, *beta, seed)?)?))
                })
                .collect(),
            InstanceSource::Files { paths, format } => paths
                .iter()
                .map(|p| {
                    let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into());
                    Ok((name, load_instance(p, format.unwrap_or_else(|| Format::from_path(p)))?))
                })
                .collect(),
        }
    }
}

/// One CSV line: one rule on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub instance: String,
    pub id: usize,
    #[serde(rename = "|M|")]
    pub m: usize,
    pub rule: String,
    pub min_prob: f64,
    pub min_prob_ratio: f64,
    pub log_nash: f64,
    pub nash_ratio: f64,
    pub t_opt_s: f64,
    pub t_partition_s: f64,
    pub t_rule_s: f64,
    pub iterations: usize,
}

/// Per rule and `|M|`: averages and timing spread.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub rule: String,
    #[serde(rename = "|M|")]
    pub m: usize,
    pub count: usize,
    pub mean_min_prob_ratio: f64,
    pub mean_nash_ratio: f64,
    pub mean_t_rule_s: f64,
    pub std_t_rule_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub rows: Vec<MetricsRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<String>,
    pub wall_time_s: f64,
}

impl ExperimentOutcome {
    /// 0 on full success, 2 when anything failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_instance(
    solver: &mut Solver,
    id: usize,
    name: &str,
    inst: IlpInstance,
    rules: &[Rule],
    opts: &RuleOptions,
    near: NearOptConfig,
) -> (Vec<MetricsRow>, Vec<String>) {
    let mut failures = Vec::new();
    let prep = match prepare(solver, inst, near) {
        Ok(p) => p,
        Err(e) => {
            log::error!("{name}: {e}");
            return (Vec::new(), vec![format!("{name}: {e}")]);
        }
    };
    let scale = prep.metric_scale();
    let mut reports = Vec::new();
    for &rule in rules {
        match run_rule(solver, &prep, rule, opts) {
            Ok(r) => reports.push((rule, r)),
            Err(e) => {
                log::error!("{name} / {rule}: {e}");
                failures.push(format!("{name} / {rule}: {e}"));
            }
        }
    }
    let find = |target: Rule| reports.iter().find(|(r, _)| *r == target).map(|(_, rep)| rep.clone());
    let mut reference = |target: Rule| match find(target) {
        Some(rep) => Ok(rep),
        None => run_rule(solver, &prep, target, opts),
    };
    let m = prep.agents().len();
    let refs = if m == 0 {
        Ok((1.0, 0.0))
    } else {
        reference(Rule::Maximin).and_then(|mm| {
        let gamma = mm.objective_value.unwrap_or_else(|| fairness_metrics(&scale, &mm.distribution.0).0);
        let lex_gamma = find(Rule::Leximin).and_then(|l| l.objective_value).unwrap_or(gamma);
        reference(Rule::Nash).map(|nash| (lex_gamma, fairness_metrics(&scale, &nash.distribution.0).1))
        })
    };
    let (gamma, log_nash_star) = match refs {
        Ok(r) => r,
        Err(e) => {
            failures.push(format!("{name} / reference: {e}"));
            return (Vec::new(), failures);
        }
    };
    let row = |rule: String, min_prob: f64, log_nash: f64, t_rule_s: f64, iterations: usize| MetricsRow {
        instance: name.to_string(),
        id,
        m,
        rule,
        min_prob,
        min_prob_ratio: min_ratio(min_prob, gamma),
        log_nash,
        nash_ratio: nash_ratio(log_nash, log_nash_star),
        t_opt_s: prep.t_opt_s,
        t_partition_s: prep.t_partition_s,
        t_rule_s,
        iterations,
    };
    let mut rows: Vec<MetricsRow> = reports
        .iter()
        .map(|(rule, rep)| {
            let (min_prob, log_nash) = fairness_metrics(&scale, &rep.distribution.0);
            row(rule.to_string(), min_prob, log_nash, rep.wall_time_s, rep.iterations)
        })
        .collect();
    if m > 0 {
        let floor = 1.0 / m as f64;
        rows.push(row("one_over_M".into(), floor, m as f64 * floor.ln(), 0.0, 0));
    }
    (rows, failures)
}

fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.rule.clone(), r.m)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((rule, m), rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&MetricsRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_t = mean(&|r| r.t_rule_s);
            let var = if rs.len() > 1 {
                rs.iter().map(|r| (r.t_rule_s - mean_t).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                rule,
                m,
                count: rs.len(),
                mean_min_prob_ratio: mean(&|r| r.min_prob_ratio),
                mean_nash_ratio: mean(&|r| r.nash_ratio),
                mean_t_rule_s: mean_t,
                std_t_rule_s: var.sqrt(),
            }
        })
        .collect()
}

/// Runs every rule on every instance across a pool of workers, each with its
/// own solver, then writes the requested reports.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let clock = Instant::now();
    let rules = config.validate()?;
    let instances = config.instances()?;
    let opts = RuleOptions { cap: config.cap, trials: config.trials, seed: config.seed, ..Default::default() };
    let near = NearOptConfig { epsilon: config.epsilon, absolute_slack: 0.0 };
    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, instances.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(Vec<MetricsRow>, Vec<String>)>>> = Mutex::new(vec![None; instances.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut solver = Solver::new(SolverConfig { seed: config.seed, ..Default::default() });
                loop {
                    let k = next.fetch_add(1, AtomicOrdering::SeqCst);
                    let Some((name, inst)) = instances.get(k) else { break };
                    log::info!("instance {k}: {name}");
                    let out = run_instance(&mut solver, k, name, inst.clone(), &rules, &opts, near);
                    results.lock().expect("no worker panicked")[k] = Some(out);
                }
            });
        }
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in results.into_inner().expect("no worker panicked").into_iter().flatten() {
        rows.extend(r);
        failures.extend(f);
    }
    let outcome = ExperimentOutcome {
        config: config.clone(),
        summary: summarize(&rows),
        rows,
        failures,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    if let Some(path) = &config.out_csv {
        outcome.write_csv(std::fs::File::create(path)?)?;
    }
    if let Some(path) = &config.out_json {
        std::fs::write(path, serde_json::to_string_pretty(&outcome)?)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kidney_config(rules: &[&str]) -> ExperimentConfig {
        ExperimentConfig {
            source: InstanceSource::Kidney { pairs_min: 8, pairs_max: 12, count: 3, params: KidneyParams::default() },
            rules: rules.iter().map(|s| s.to_string()).collect(),
            cap: 1000,
            trials: 50,
            epsilon: 0.0,
            seed: 11,
            out_csv: None,
            out_json: None,
            workers: Some(2),
        }
    }

    fn without_timing(rows: &[MetricsRow]) -> Vec<MetricsRow> {
        rows.iter()
            .map(|r| MetricsRow { t_opt_s: 0.0, t_partition_s: 0.0, t_rule_s: 0.0, ..r.clone() })
            .collect()
    }

    #[test]
    fn empty_rules_rejected() {
        assert!(matches!(run_experiment(&kidney_config(&[])), Err(FairError::Config(_))));
    }

    #[test]
    fn reproducible_rows() {
        let cfg = kidney_config(&["uniform", "leximin", "nash", "reindex"]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.exit_code(), 0, "{:?}", a.failures);
        assert_eq!(without_timing(&a.rows), without_timing(&b.rows));
        for r in &a.rows {
            assert!(r.min_prob_ratio <= 1.0 + 1e-6 && r.nash_ratio <= 1.0 + 1e-6, "{r:?}");
            if r.rule == "leximin" {
                assert!((r.min_prob_ratio - 1.0).abs() < 1e-5);
            }
            if r.rule == "nash" && r.m > 0 {
                assert!((r.nash_ratio - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn csv_header() {
        let cfg = kidney_config(&["leximin"]);
        let out = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "instance,id,|M|,rule,min_prob,min_prob_ratio,log_nash,nash_ratio,t_opt_s,t_partition_s,t_rule_s,iterations\n"
        ));
    }
}
