//! Batch commands behind the CLI. Every seed (and every sweep point) is an
//! independent job; jobs run in parallel and each writes its own files via
//! a temporary file and rename.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{train, AgentSet, Algorithm, TrainOutcome};
use crate::env::{run_totals, write_episode_log, Dispatch, Environment, StepRecord};
use crate::error::{Error, Result};
use crate::oracle::{solve_oracle, OracleSolution};
use crate::policy::{run_policy, PolicyKind, ReplayPolicy, StaticPolicy};
use crate::scenario::{ScenarioConfig, SweepAxis};
use crate::stats::median;

pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";
pub const ORACLE_ACTIONS_FILE: &str = "oracle_actions.csv";

pub fn episode_log_file(kind: PolicyKind) -> String {
    format!("episode_log_{kind}.csv")
}

pub fn summary_file(kind: PolicyKind) -> String {
    format!("summary_{kind}.csv")
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Writes `path` through a sibling temporary file so readers never see a
/// partial file.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        csv.write_record(header)?;
        for r in rows {
            csv.serialize(r)?;
        }
        csv.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    })
}

/// Reads back any CSV this module writes.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub total_opex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub city: String,
    pub traffic_rate: f64,
    pub total_opex: f64,
    pub renewable_used: f64,
    pub unstored: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub policy: String,
    pub total_opex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleActionRow {
    pub t: usize,
    pub node: String,
    /// Split points per traffic type joined with `;`, empty for the CU.
    pub splits: String,
    /// Dispatch level index, or kWh when prefixed with `=`.
    pub dispatch: String,
}

fn algorithm(kind: PolicyKind) -> Result<Algorithm> {
    match kind {
        PolicyKind::RldfsQl => Ok(Algorithm::QLearning),
        PolicyKind::RldfsSarsa => Ok(Algorithm::Sarsa),
        other => Err(Error::config(
            "policy.kind",
            format!("`{other}` is not a learning policy"),
        )),
    }
}

/// Trains the configured learner for one seed, in memory.
pub fn train_seed(cfg: &ScenarioConfig, kind: PolicyKind, seed: u64) -> Result<TrainOutcome> {
    train(
        || cfg.build_env(seed, true),
        algorithm(kind)?,
        &cfg.policy.learning,
        cfg.policy.discretization,
        seed,
    )
}

#[derive(Debug, Clone)]
pub struct TrainArtifact {
    pub seed: u64,
    pub dir: PathBuf,
    pub curve: Vec<f64>,
}

/// `train`: Q-tables and a learning curve per seed under `out/seed-<n>/`.
pub fn cmd_train(cfg: &ScenarioConfig) -> Result<Vec<TrainArtifact>> {
    let kind = cfg.policy.kind;
    algorithm(kind)?;
    cfg.run
        .seeds
        .par_iter()
        .map(|&seed| {
            let outcome = train_seed(cfg, kind, seed)?;
            let dir = seed_dir(&cfg.run.out, seed);
            outcome.agents.save(&dir)?;
            let rows: Vec<CurveRow> = outcome
                .curve
                .iter()
                .enumerate()
                .map(|(episode, &total_opex)| CurveRow {
                    episode,
                    total_opex,
                })
                .collect();
            write_rows(
                &dir.join(LEARNING_CURVE_FILE),
                &["episode", "total_opex"],
                &rows,
            )?;
            log::info!("seed {seed}: trained {} episodes", rows.len());
            Ok(TrainArtifact {
                seed,
                dir,
                curve: outcome.curve,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub seed: u64,
    pub summary: SummaryRow,
    pub records: Vec<StepRecord>,
}

fn summarize(cfg: &ScenarioConfig, kind: PolicyKind, records: &[StepRecord]) -> SummaryRow {
    let totals = run_totals(records);
    SummaryRow {
        policy: kind.name().into(),
        city: cfg.solar.city.clone(),
        traffic_rate: cfg.traffic.intensity,
        total_opex: totals.opex,
        renewable_used: totals.renewable_used,
        unstored: totals.unstored,
    }
}

fn oracle_for(cfg: &ScenarioConfig, env: &Environment) -> Result<OracleSolution> {
    solve_oracle(env, cfg.oracle.dispatch(), &cfg.oracle.limits())
}

/// Frozen-policy run of `kind` for one seed. Learned policies come from
/// `agents` when given, otherwise from `artifacts/seed-<n>/`.
pub fn evaluate_seed(
    cfg: &ScenarioConfig,
    kind: PolicyKind,
    seed: u64,
    artifacts: Option<&Path>,
    agents: Option<AgentSet>,
) -> Result<Evaluation> {
    let mut env = cfg.build_env(seed, false)?;
    let records = match kind {
        PolicyKind::Dran => run_policy(&mut env, &mut StaticPolicy::Dran)?,
        PolicyKind::Cran => run_policy(&mut env, &mut StaticPolicy::Cran)?,
        PolicyKind::RldfsQl | PolicyKind::RldfsSarsa => {
            let mut agents = match agents {
                Some(a) => a,
                None => {
                    let dir = artifacts.ok_or_else(|| {
                        Error::config(
                            "--artifacts",
                            format!("policy `{kind}` needs trained tables"),
                        )
                    })?;
                    AgentSet::load(&seed_dir(dir, seed), &env, cfg.policy.discretization)?
                }
            };
            run_policy(&mut env, &mut agents)?
        }
        PolicyKind::Oracle => {
            let solution = oracle_for(cfg, &env)?;
            run_policy(&mut env, &mut ReplayPolicy::new(solution.actions))?
        }
    };
    Ok(Evaluation {
        seed,
        summary: summarize(cfg, kind, &records),
        records,
    })
}

fn write_evaluation(cfg: &ScenarioConfig, kind: PolicyKind, eval: &Evaluation) -> Result<()> {
    let dir = seed_dir(&cfg.run.out, eval.seed);
    write_atomic(&dir.join(episode_log_file(kind)), |w| {
        write_episode_log(&eval.records, w)
    })?;
    write_rows(
        &dir.join(summary_file(kind)),
        &[
            "policy",
            "city",
            "traffic_rate",
            "total_opex",
            "renewable_used",
            "unstored",
        ],
        std::slice::from_ref(&eval.summary),
    )
}

/// `evaluate`: per seed, a per-step log and a one-row summary, both named
/// after the policy.
pub fn cmd_evaluate(cfg: &ScenarioConfig, artifacts: Option<&Path>) -> Result<Vec<Evaluation>> {
    let kind = cfg.policy.kind;
    cfg.run
        .seeds
        .par_iter()
        .map(|&seed| {
            let eval = evaluate_seed(cfg, kind, seed, artifacts, None)?;
            write_evaluation(cfg, kind, &eval)?;
            Ok(eval)
        })
        .collect()
}

/// Total cost of `kind` on one seed, training first if it learns.
fn sweep_point(cfg: &ScenarioConfig, kind: PolicyKind, seed: u64) -> Result<f64> {
    let agents = if kind.is_learned() {
        Some(train_seed(cfg, kind, seed)?.agents)
    } else {
        None
    };
    Ok(evaluate_seed(cfg, kind, seed, None, agents)?
        .summary
        .total_opex)
}

/// `sweep`: one row per (value, policy) holding the median total cost over
/// the configured seeds. Written to `out/sweep_<axis>.csv`.
pub fn cmd_sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::config("--values", "need at least one value"));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::config(
            "--values",
            format!("sweep values must be positive, got {v}"),
        ));
    }
    let mut jobs = Vec::new();
    for &value in values {
        let point = cfg.with_axis(axis, value);
        point.validate()?;
        for &kind in &cfg.sweep.policies {
            for &seed in &cfg.run.seeds {
                jobs.push((value, kind, seed, point.clone()));
            }
        }
    }
    let costs: Vec<f64> = jobs
        .par_iter()
        .map(|(_, kind, seed, point)| sweep_point(point, *kind, *seed))
        .collect::<Result<_>>()?;

    let per_point = cfg.run.seeds.len();
    let rows: Vec<SweepRow> = jobs
        .chunks(per_point)
        .zip(costs.chunks(per_point))
        .map(|(job, cost)| SweepRow {
            axis: axis.name().into(),
            value: job[0].0,
            policy: job[0].1.name().into(),
            total_opex: median(cost).expect("at least one seed"),
        })
        .collect();
    write_rows(
        &cfg.run.out.join(format!("sweep_{}.csv", axis.name())),
        &["axis", "value", "policy", "total_opex"],
        &rows,
    )?;
    Ok(rows)
}

/// `oracle`: the exact optimum per seed, its replayed log, summary and
/// action schedule.
pub fn cmd_oracle(cfg: &ScenarioConfig) -> Result<Vec<(Evaluation, OracleSolution)>> {
    cfg.run
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut env = cfg.build_env(seed, false)?;
            let solution = oracle_for(cfg, &env)?;
            let records = run_policy(&mut env, &mut ReplayPolicy::new(solution.actions.clone()))?;
            let eval = Evaluation {
                seed,
                summary: summarize(cfg, PolicyKind::Oracle, &records),
                records,
            };
            write_evaluation(cfg, PolicyKind::Oracle, &eval)?;
            let mut rows = Vec::new();
            for (t, a) in solution.actions.iter().enumerate() {
                let nodes = std::iter::once(("cu".to_string(), &a.cu)).chain(
                    a.du.iter()
                        .enumerate()
                        .map(|(r, na)| (format!("du{r}"), na)),
                );
                for (node, na) in nodes {
                    rows.push(OracleActionRow {
                        t,
                        node,
                        splits: na
                            .splits
                            .iter()
                            .map(|s| s.to_string())
                            .collect::<Vec<_>>()
                            .join(";"),
                        dispatch: match na.dispatch {
                            Dispatch::Level(l) => l.to_string(),
                            Dispatch::Energy(p) => format!("={p}"),
                        },
                    });
                }
            }
            write_rows(
                &seed_dir(&cfg.run.out, seed).join(ORACLE_ACTIONS_FILE),
                &["t", "node", "splits", "dispatch"],
                &rows,
            )?;
            Ok((eval, solution))
        })
        .collect()
}
