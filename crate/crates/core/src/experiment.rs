//! Training, evaluation and comparison runs with file artifacts.

use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::dispatch::{AgentMode, CheckpointError, DdqnAgent};
use crate::engine::{run_episode, BaselineMode, EngineError, SimConfig};
use crate::metrics::{DayMetrics, MetricsReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CURVE_FILE: &str = "training_curve.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";

pub fn report_file(baseline: BaselineMode) -> String {
    format!("report_{}.json", baseline.name())
}

/// A fresh agent for `sim`; initial weights depend only on the seed.
pub fn new_agent(sim: &SimConfig) -> Result<DdqnAgent, EngineError> {
    let weights = sim.reward.weights()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    rng.set_stream(99);
    Ok(DdqnAgent::new(
        sim.dqn.clone(),
        weights.discount,
        sim.fleet_size,
        &mut rng,
    ))
}

/// Train `agent` for `episodes` episodes with seeds `first_seed, first_seed + 1, ...`.
/// Returns the metrics of each episode.
pub fn train_agent(
    sim: &SimConfig,
    agent: &mut DdqnAgent,
    episodes: u32,
    first_seed: u64,
) -> Result<Vec<MetricsReport>, ExperimentError> {
    let mut reports = Vec::new();
    for ep in 0..episodes {
        let cfg = SimConfig {
            seed: first_seed + ep as u64,
            ..sim.clone()
        };
        reports.push(run_episode(&cfg, Some(agent), AgentMode::Train)?.metrics);
    }
    Ok(reports)
}

/// Frozen-policy metrics for each seed.
pub fn evaluate_agent(
    sim: &SimConfig,
    agent: &mut DdqnAgent,
    seeds: &[u64],
) -> Result<Vec<MetricsReport>, ExperimentError> {
    seeds
        .iter()
        .map(|&seed| {
            let cfg = SimConfig {
                seed,
                ..sim.clone()
            };
            Ok(run_episode(&cfg, Some(agent), AgentMode::Eval)?.metrics)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u32,
    pub seed: u64,
    pub step_after: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub baseline: BaselineMode,
    pub episodes: Vec<EpisodeSummary>,
    pub final_step: u64,
    pub checkpoint: PathBuf,
    pub params_sha256: String,
}

/// Run the configured training episodes, writing checkpoints, the training
/// curve and a summary into `out`. With `resume`, the agent continues from a
/// checkpoint and its step counter.
pub fn train(
    cfg: &ExperimentConfig,
    out: &Path,
    resume: Option<&Path>,
) -> Result<TrainSummary, ExperimentError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut agent = new_agent(&cfg.sim)?;
    if let Some(path) = resume {
        agent.load(path)?;
    }
    let ticks = cfg.sim.ticks.max(1);
    let first_seed = cfg.sim.seed + agent.step() / ticks;

    let curve_path = out.join(CURVE_FILE);
    let fresh_curve = resume.is_none() || !curve_path.exists();
    let curve_file = OpenOptions::new()
        .create(true)
        .append(!fresh_curve)
        .write(true)
        .truncate(fresh_curve)
        .open(&curve_path)
        .map_err(io_err(&curve_path))?;
    let mut curve = csv::WriterBuilder::new()
        .has_headers(fresh_curve)
        .from_writer(curve_file);
    let checkpoint = out.join(CHECKPOINT_FILE);

    let mut episodes = Vec::new();
    let every = cfg.train.checkpoint_every.max(1);
    for ep in 0..cfg.train.episodes {
        let seed = first_seed + ep as u64;
        let run_cfg = SimConfig {
            seed,
            ..cfg.sim.clone()
        };
        let outcome = run_episode(&run_cfg, Some(&mut agent), AgentMode::Train)?;
        for row in &outcome.curve {
            curve.serialize(row)?;
        }
        curve.flush().map_err(io_err(&curve_path))?;
        if (ep + 1) % every == 0 {
            agent.save(&checkpoint)?;
        }
        episodes.push(EpisodeSummary {
            episode: ep,
            seed,
            step_after: agent.step(),
            metrics: outcome.metrics,
        });
    }
    agent.save(&checkpoint)?;

    let summary = TrainSummary {
        baseline: cfg.sim.baseline,
        episodes,
        final_step: agent.step(),
        checkpoint: checkpoint.clone(),
        params_sha256: agent.digest(),
    };
    let path = out.join(TRAIN_SUMMARY_FILE);
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(&path).map_err(io_err(&path))?),
        &summary,
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineReport {
    pub baseline: BaselineMode,
    pub runs: Vec<SeedReport>,
    /// Mean of each headline metric over seeds (NaN values skipped).
    pub mean: Vec<(String, f64)>,
}

impl BaselineReport {
    pub fn from_runs(baseline: BaselineMode, runs: Vec<SeedReport>) -> Self {
        let names: Vec<&str> = MetricsReport::default()
            .headline()
            .iter()
            .map(|(n, _)| *n)
            .collect();
        let mean = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let vals: Vec<f64> = runs
                    .iter()
                    .map(|r| r.metrics.headline()[k].1)
                    .filter(|v| !v.is_nan())
                    .collect();
                let m = if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                };
                (name.to_string(), m)
            })
            .collect();
        Self {
            baseline,
            runs,
            mean,
        }
    }

    pub fn mean_of(&self, name: &str) -> Option<f64> {
        self.mean.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let file = File::open(path).map_err(io_err(path))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[derive(Debug, Clone, Serialize)]
struct PerDayRow {
    seed: u64,
    day: u64,
    requests: u64,
    accept_rate: f64,
    active_vehicle_ratio: f64,
    fuel_cost_per_delivery: f64,
    mean_wait_ticks: f64,
    effective_distance_ratio: f64,
}

impl From<&DayMetrics> for PerDayRow {
    fn from(d: &DayMetrics) -> Self {
        Self {
            seed: 0,
            day: d.day,
            requests: d.requests,
            accept_rate: d.accept_rate,
            active_vehicle_ratio: d.active_vehicle_ratio,
            fuel_cost_per_delivery: d.fuel_cost_per_delivery,
            mean_wait_ticks: d.mean_wait_ticks,
            effective_distance_ratio: d.effective_distance_ratio,
        }
    }
}

/// Evaluate a checkpoint (or a fresh policy) on every configured baseline
/// and held-out seed. The checkpoint shape is verified before simulating.
pub fn evaluate(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<Vec<BaselineReport>, ExperimentError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut agent = new_agent(&cfg.sim)?;
    if let Some(path) = checkpoint {
        agent.load(path)?;
    }
    let mut reports = Vec::new();
    for &baseline in &cfg.eval.baselines {
        let sim = SimConfig {
            baseline,
            ..cfg.sim.clone()
        };
        let mut runs = Vec::new();
        let mut per_day = csv::Writer::from_writer(Vec::new());
        for &seed in &cfg.eval.seeds {
            let run_cfg = SimConfig {
                seed,
                ..sim.clone()
            };
            let outcome = run_episode(&run_cfg, Some(&mut agent), AgentMode::Eval)?;
            if cfg.eval.write_logs {
                let path = out.join(format!("log_{}_{seed}.jsonl", baseline.name()));
                let w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
                outcome.log.write_jsonl(w).map_err(io_err(&path))?;
            }
            for d in &outcome.metrics.per_day {
                per_day.serialize(PerDayRow {
                    seed,
                    ..PerDayRow::from(d)
                })?;
            }
            runs.push(SeedReport {
                seed,
                metrics: outcome.metrics,
            });
        }
        let report = BaselineReport::from_runs(baseline, runs);
        let path = out.join(report_file(baseline));
        serde_json::to_writer_pretty(
            BufWriter::new(File::create(&path).map_err(io_err(&path))?),
            &report,
        )?;
        let path = out.join(format!("per_day_{}.csv", baseline.name()));
        let bytes = per_day
            .into_inner()
            .map_err(|e| e.into_error())
            .map_err(io_err(&path))?;
        fs::write(&path, bytes).map_err(io_err(&path))?;
        reports.push(report);
    }
    Ok(reports)
}

/// Whether larger values of a headline metric are better.
pub fn higher_is_better(metric: &str) -> bool {
    matches!(
        metric,
        "accept_rate" | "accept_rate_passenger" | "accept_rate_goods" | "effective_distance_ratio"
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `a - b`.
    pub delta: f64,
    /// `"a_better"`, `"b_better"` or `"tie"`.
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub deltas: Vec<MetricDelta>,
}

/// Pairwise deltas of mean metrics between every ordered pair `(i < j)`.
pub fn compare(reports: &[(String, BaselineReport)]) -> Vec<PairComparison> {
    let mut out = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            let (na, ra) = &reports[i];
            let (nb, rb) = &reports[j];
            let deltas = ra
                .mean
                .iter()
                .map(|(metric, a)| {
                    let b = rb.mean_of(metric).unwrap_or(f64::NAN);
                    let delta = a - b;
                    let verdict = if delta == 0.0 || delta.is_nan() {
                        "tie"
                    } else if (delta > 0.0) == higher_is_better(metric) {
                        "a_better"
                    } else {
                        "b_better"
                    };
                    MetricDelta {
                        metric: metric.clone(),
                        a: *a,
                        b,
                        delta,
                        verdict: verdict.into(),
                    }
                })
                .collect();
            out.push(PairComparison {
                a: na.clone(),
                b: nb.clone(),
                deltas,
            });
        }
    }
    out
}

/// Side-by-side table of mean metrics.
pub fn comparison_table(reports: &[(String, BaselineReport)]) -> String {
    use std::fmt::Write as _;
    let mut s = format!("{:<28}", "metric");
    for (name, _) in reports {
        let _ = write!(s, "{name:>16}");
    }
    s.push('\n');
    if let Some((_, first)) = reports.first() {
        for (metric, _) in &first.mean {
            let _ = write!(s, "{metric:<28}");
            for (_, r) in reports {
                let v = r.mean_of(metric).unwrap_or(f64::NAN);
                let _ = write!(
                    s,
                    "{:>16}",
                    if v.is_nan() {
                        "n/a".into()
                    } else {
                        format!("{v:.4}")
                    }
                );
            }
            s.push('\n');
        }
    }
    s
}
