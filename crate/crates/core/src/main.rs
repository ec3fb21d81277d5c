use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use fairip_core::bench::{
    audit_rule, load_instance, prepare, run_experiment, run_rule, ExperimentConfig, Format, Rule, RuleOptions,
};
use fairip_core::enumeration::enumerate_optimal;
use fairip_core::model::{solve_optimal, IlpInstance, NearOptConfig, OptimalSet, Solver, SolverConfig};
use fairip_core::partition::partition_agents;
use fairip_core::rsd::sample_rsd;
use fairip_core::{FairError, Result};

#[derive(Parser)]
#[command(name = "fairip", version, about = "Fair lotteries over the optimal solutions of integer programs")]
struct Cli {
    /// Instance file.
    #[arg(long, global = true)]
    instance: Option<PathBuf>,
    /// Instance format; guessed from the extension when omitted.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Relative optimality tolerance defining the near-optimal set.
    #[arg(long, global = true, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Enumeration cap.
    #[arg(long, global = true, default_value_t = fairip_core::enumeration::DEFAULT_CAP)]
    cap: usize,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One optimal solution and the optimal value.
    Solve,
    /// Agents selected in every, no, or some optimal solutions.
    Partition,
    /// Distribution and lottery of a rule.
    Rule {
        name: String,
        /// Trials for sampled rules.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Largest |M| for exact random serial dictatorship.
        #[arg(long, default_value_t = fairip_core::rsd::DEFAULT_EXACT_LIMIT)]
        exact_limit: usize,
    },
    /// Draws one solution according to a rule.
    Sample {
        #[arg(long, default_value = "rsd")]
        rule: String,
    },
    /// Lists optimal solutions up to the cap.
    Enumerate,
    /// Runs an experiment described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// JSON summary path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Axiom audit of a rule on the instance.
    Audit {
        #[arg(long, default_value = "uniform")]
        rule: String,
    },
}

fn read_instance(cli: &Cli) -> Result<IlpInstance> {
    let path = cli.instance.as_deref().ok_or_else(|| FairError::Config("--instance is required".into()))?;
    load_instance(path, cli.format.unwrap_or_else(|| Format::from_path(path)))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let near = NearOptConfig { epsilon: cli.epsilon, absolute_slack: 0.0 };
    near.validate()?;
    let mut solver = Solver::new(SolverConfig { seed: cli.seed, ..Default::default() });
    let opts = RuleOptions { cap: cli.cap, seed: cli.seed, ..Default::default() };
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Solve => {
            let inst = read_instance(cli)?;
            let (sol, z) = solve_optimal(&mut solver, &inst)?;
            emit(out, &serde_json::to_string_pretty(&json!({ "z_star": z, "x": sol.x, "y": sol.y }))?)?;
        }
        Command::Partition => {
            let set = OptimalSet::solve(&mut solver, read_instance(cli)?, near)?;
            let p = partition_agents(&mut solver, &set)?;
            let text = serde_json::to_string_pretty(&json!({
                "z_star": set.z_star,
                "yes": p.yes,
                "no": p.no,
                "maybe": p.maybe,
                "solver_calls": p.solver_calls,
            }))?;
            emit(out, &text)?;
        }
        Command::Rule { name, trials, exact_limit } => {
            let rule: Rule = name.parse()?;
            let prep = prepare(&mut solver, read_instance(cli)?, near)?;
            let opts = RuleOptions { trials: *trials, exact_limit: *exact_limit, ..opts };
            let report = run_rule(&mut solver, &prep, rule, &opts)?;
            emit(out, &report.to_json()?)?;
        }
        Command::Sample { rule } => {
            let rule: Rule = rule.parse()?;
            let prep = prepare(&mut solver, read_instance(cli)?, near)?;
            let sol = if rule == Rule::Rsd {
                sample_rsd(&mut solver, &prep.set, prep.agents(), cli.seed)?
            } else {
                let report = run_rule(&mut solver, &prep, rule, &opts)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
                report.sample(&mut rng).cloned().ok_or(FairError::EmptyPool)?
            };
            emit(out, &serde_json::to_string(&sol)?)?;
        }
        Command::Enumerate => {
            let set = OptimalSet::solve(&mut solver, read_instance(cli)?, near)?;
            let pool = enumerate_optimal(&mut solver, &set, cli.cap)?;
            if !pool.complete {
                log::warn!("cap of {} reached; the listing is partial", cli.cap);
            }
            match out {
                Some(p) => pool.write_jsonl(std::fs::File::create(p)?)?,
                None => pool.write_jsonl(std::io::stdout().lock())?,
            }
        }
        Command::Bench { config, json } => {
            let mut cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
            if cli.out.is_some() {
                cfg.out_csv = cli.out.clone();
            }
            if json.is_some() {
                cfg.out_json = json.clone();
            }
            let outcome = run_experiment(&cfg)?;
            if cfg.out_csv.is_none() {
                outcome.write_csv(std::io::stdout().lock())?;
            }
            for f in &outcome.failures {
                eprintln!("failed: {f}");
            }
            return Ok(ExitCode::from(outcome.exit_code() as u8));
        }
        Command::Audit { rule } => {
            let rule: Rule = rule.parse()?;
            let report = audit_rule(&mut solver, &read_instance(cli)?, near, rule, &opts)?;
            emit(out, &serde_json::to_string_pretty(&report)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
