//! Experiment orchestration: fixed-time, learned and learned-plus-rerouting
//! runs, parameter sweeps, and the comparison report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::metrics::{
    final_quarter, mean_of, read_metrics, write_metrics, EpisodeMetrics, MetricsError,
};
use crate::neuralnet::{Mlp, NnError};
use crate::pgagent::{compute_reward, episode_seed, run_training_with, AgentError, Environment};
use crate::rerouter::{
    apply_rerouting, write_reroute_log, CongestionMonitor, Decision, RerouteDecision,
};
use crate::roadnet::{build_default_network, NetworkError, RoadNetwork};
use crate::simcore::{
    read_schedule, spawn_schedule, DetectorReading, Phase, ScheduledVehicle, SimError, SimParams,
    SimState,
};

pub const DETECTOR_LOG_HEADER: &str = "window_start,arm,count,mean_speed,density";
pub const COMPARISON_HEADER: &str =
    "sweep_value,seed,final_avg_cum_delay,final_avg_queue,final_avg_neg_reward";
pub const RANKING_HEADER: &str =
    "rank,sweep_value,mean_final_neg_reward,mean_final_cum_delay,expected_best";

/// Published reference figures, reported next to the measured ones.
pub const REFERENCE_RL_TIME_REDUCTION_PCT: f64 = 20.0;
pub const REFERENCE_RL_REROUTE_TIME_REDUCTION_PCT: f64 = 34.0;
pub const REFERENCE_FIXED_SIM_TIME_S: f64 = 7392.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("{0}")]
    Input(String),
}

impl HarnessError {
    /// 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Context { source, .. } => source.exit_code(),
            _ => 2,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Fixed,
    Rl,
    RlReroute,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Fixed, Mode::Rl, Mode::RlReroute];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fixed => "fixed",
            Mode::Rl => "rl",
            Mode::RlReroute => "rl_reroute",
        }
    }

    /// Accepts both `rl_reroute` and `rl-reroute`.
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "fixed" => Some(Mode::Fixed),
            "rl" => Some(Mode::Rl),
            "rl_reroute" | "rl-reroute" => Some(Mode::RlReroute),
            _ => None,
        }
    }
}

/// Network and demand shared by every episode of a run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: RunConfig,
    pub net: Arc<RoadNetwork>,
    fixed_schedule: Option<Vec<ScheduledVehicle>>,
}

impl Scenario {
    pub fn new(config: RunConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let net = match &config.network {
            Some(p) => RoadNetwork::load(p)?,
            None => build_default_network(),
        };
        let fixed_schedule = match &config.schedule {
            Some(p) => {
                let f = fs::File::open(p).map_err(|e| HarnessError::io(p, e))?;
                Some(read_schedule(&net, f)?)
            }
            None => None,
        };
        Ok(Scenario {
            config,
            net: Arc::new(net),
            fixed_schedule,
        })
    }

    /// Demand of one episode; a schedule file overrides generation.
    pub fn schedule(&self, seed: u64) -> Result<Vec<ScheduledVehicle>, SimError> {
        match &self.fixed_schedule {
            Some(s) => Ok(s.clone()),
            None => spawn_schedule(&self.net, self.config.vehicles, seed, self.config.horizon),
        }
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            yellow_duration: self.config.train.yellow_duration,
            time_cap: self.config.time_cap,
            ..SimParams::default()
        }
    }

    pub fn env(&self, seed: u64, reroute: bool) -> Result<SignalEnv, HarnessError> {
        let sim = SimState::new(self.net.clone(), &self.schedule(seed)?, self.sim_params())?;
        let monitor = if reroute {
            Some(CongestionMonitor::new(self.config.threshold)?)
        } else {
            None
        };
        Ok(SignalEnv {
            sim,
            green: self.config.train.green_duration,
            monitor,
            decisions: Vec::new(),
        })
    }
}

/// A simulation driven one phase decision at a time, optionally with
/// rerouting at every detector window.
#[derive(Debug, Clone)]
pub struct SignalEnv {
    pub sim: SimState,
    green: u32,
    monitor: Option<CongestionMonitor>,
    decisions: Vec<RerouteDecision>,
}

impl SignalEnv {
    pub fn decisions(&self) -> &[RerouteDecision] {
        &self.decisions
    }

    /// One simulated second plus any rerouting it triggers.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.sim.step()?;
        if let Some(m) = self.monitor.as_mut() {
            self.decisions.extend(apply_rerouting(&mut self.sim, m)?);
        }
        Ok(())
    }

    /// Up to `seconds` steps, stopping early once finished.
    pub fn run(&mut self, seconds: u32) -> Result<(), SimError> {
        for _ in 0..seconds {
            if self.sim.finished() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    /// Selects `phase` and runs its yellow clearance, if any.
    pub fn switch_to(&mut self, phase: Phase) -> Result<(), SimError> {
        if self.sim.set_phase(phase)? {
            self.run(self.sim.params().yellow_duration)?;
        }
        Ok(())
    }
}

impl Environment for SignalEnv {
    fn observe(&self) -> Vec<bool> {
        self.sim.read_sensors().to_vec()
    }

    fn cumulative_wait(&self) -> f64 {
        self.sim.cumulative_wait() as f64
    }

    fn act(&mut self, action: usize) -> Result<(), AgentError> {
        self.switch_to(Phase::new(action)?)?;
        self.run(self.green)?;
        Ok(())
    }

    fn finished(&self) -> bool {
        self.sim.finished()
    }

    fn metrics(&self, episode: usize, cum_negative_reward: f64) -> EpisodeMetrics {
        let counts = self.sim.counts();
        EpisodeMetrics::from_totals(
            episode,
            self.sim.total_delay(),
            self.sim.clock(),
            cum_negative_reward,
            counts.arrived,
            counts.total(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: Mode,
    pub seed: u64,
    pub metrics: Vec<EpisodeMetrics>,
    pub policy: Option<Mlp>,
    /// Detector windows of the final episode.
    pub detectors: Vec<DetectorReading>,
    /// Reroute decisions of the final episode.
    pub reroutes: Vec<RerouteDecision>,
}

/// One fixed-time episode: phases 0, 1, 2, 3 in turn, each with
/// `fixed_green` seconds of green after its yellow. Negative reward is
/// measured over consecutive `green_duration` blocks so that it is on the
/// same footing as an agent's decisions.
pub fn fixed_time_episode(
    scenario: &Scenario,
    episode: usize,
    seed: u64,
) -> Result<(EpisodeMetrics, SignalEnv), HarnessError> {
    let mut env = scenario.env(seed, false)?;
    let block = scenario.config.train.green_duration.max(1);
    let mut neg = 0.0;
    let mut wait = env.cumulative_wait();
    let mut elapsed = 0;
    let mut phase = 0;
    let mut green_left = scenario.config.fixed_green;
    while !env.sim.finished() {
        if green_left == 0 && !env.sim.signal().in_yellow() {
            phase = (phase + 1) % Phase::COUNT;
            env.sim.set_phase(Phase::new(phase)?)?;
            green_left = scenario.config.fixed_green;
        }
        if !env.sim.signal().in_yellow() {
            green_left -= 1;
        }
        env.step()?;
        elapsed += 1;
        if elapsed % block == 0 || env.sim.finished() {
            let now = env.cumulative_wait();
            neg += compute_reward(wait, now).min(0.0);
            wait = now;
        }
    }
    Ok((env.metrics(episode, neg), env))
}

pub fn run_fixed_time(scenario: &Scenario, seed: u64) -> Result<RunResult, HarnessError> {
    let mut metrics = Vec::with_capacity(scenario.config.train.episodes);
    let mut last = None;
    for ep in 0..scenario.config.train.episodes {
        let (m, env) = fixed_time_episode(scenario, ep, episode_seed(seed, ep)).map_err(|e| {
            HarnessError::Context {
                context: format!("fixed-time episode {ep}"),
                source: Box::new(e),
            }
        })?;
        metrics.push(m);
        last = Some(env);
    }
    Ok(RunResult {
        mode: Mode::Fixed,
        seed,
        metrics,
        policy: None,
        detectors: last
            .as_ref()
            .map(|e| e.sim.detector_log().to_vec())
            .unwrap_or_default(),
        reroutes: Vec::new(),
    })
}

pub fn run_rl(scenario: &Scenario, seed: u64, reroute: bool) -> Result<RunResult, HarnessError> {
    let mut train = scenario.config.train.clone();
    train.seed = seed;
    let mut detectors = Vec::new();
    let mut reroutes = Vec::new();
    let (net, metrics) = run_training_with(
        &train,
        |_, s| scenario.env(s, reroute).map_err(into_agent),
        |env: &SignalEnv, _| {
            detectors = env.sim.detector_log().to_vec();
            reroutes = env.decisions().to_vec();
        },
    )?;
    Ok(RunResult {
        mode: if reroute { Mode::RlReroute } else { Mode::Rl },
        seed,
        metrics,
        policy: Some(net),
        detectors,
        reroutes,
    })
}

fn into_agent(e: HarnessError) -> AgentError {
    match e {
        HarnessError::Sim(s) => AgentError::Sim(s),
        HarnessError::Agent(a) => a,
        other => AgentError::Config(other.to_string()),
    }
}

pub fn run_mode(scenario: &Scenario, mode: Mode, seed: u64) -> Result<RunResult, HarnessError> {
    match mode {
        Mode::Fixed => run_fixed_time(scenario, seed),
        Mode::Rl => run_rl(scenario, seed, false),
        Mode::RlReroute => run_rl(scenario, seed, true),
    }
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let name = path
        .file_name()
        .ok_or_else(|| HarnessError::Input(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn detector_log_csv(readings: &[DetectorReading]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::Input(format!("detector log: {e}"));
    w.write_record(DETECTOR_LOG_HEADER.split(','))
        .map_err(err)?;
    for r in readings {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::Input(format!("detector log: {e}")))
}

/// Final-quarter means of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalAverages {
    pub cum_delay: f64,
    pub queue: f64,
    pub neg_reward: f64,
    pub sim_time: f64,
}

pub fn final_averages(metrics: &[EpisodeMetrics]) -> FinalAverages {
    let tail = final_quarter(metrics);
    FinalAverages {
        cum_delay: mean_of(tail, |m| m.cum_delay_s),
        queue: mean_of(tail, |m| m.avg_queue_len),
        neg_reward: mean_of(tail, |m| m.cum_negative_reward),
        sim_time: mean_of(tail, |m| f64::from(m.sim_time_s)),
    }
}

/// Runs `mode` and writes `metrics.csv`, `detectors.csv`, `summary.txt`,
/// `config.txt`, plus `policy.flwn` for learned modes and `reroutes.csv`
/// with rerouting. Every file is written atomically.
pub fn run_phase(
    config: &RunConfig,
    mode: Mode,
    seed: u64,
    out: &Path,
) -> Result<RunResult, HarnessError> {
    let mut config = config.clone();
    config.train.seed = seed;
    let scenario = Scenario::new(config.clone())?;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let result = run_mode(&scenario, mode, seed)?;

    let mut buf = Vec::new();
    write_metrics(&result.metrics, &mut buf)?;
    write_atomic(&out.join("metrics.csv"), &buf)?;
    write_atomic(
        &out.join("detectors.csv"),
        &detector_log_csv(&result.detectors)?,
    )?;
    if let Some(policy) = &result.policy {
        write_atomic(&out.join("policy.flwn"), &policy.to_bytes())?;
    }
    if mode == Mode::RlReroute {
        let mut buf = Vec::new();
        write_reroute_log(&scenario.net, &result.reroutes, &mut buf)?;
        write_atomic(&out.join("reroutes.csv"), &buf)?;
    }
    write_atomic(&out.join("config.txt"), config.to_text().as_bytes())?;
    write_atomic(&out.join("summary.txt"), run_summary(&result).as_bytes())?;
    Ok(result)
}

fn run_summary(r: &RunResult) -> String {
    let f = final_averages(&r.metrics);
    let switches = r
        .reroutes
        .iter()
        .filter(|d| d.decision == Decision::Switch)
        .count();
    let mut s = String::new();
    let _ = writeln!(s, "mode = {}", r.mode.as_str());
    let _ = writeln!(s, "seed = {}", r.seed);
    let _ = writeln!(s, "episodes = {}", r.metrics.len());
    let _ = writeln!(s, "final_avg_cum_delay = {}", f.cum_delay);
    let _ = writeln!(s, "final_avg_queue = {}", f.queue);
    let _ = writeln!(s, "final_avg_neg_reward = {}", f.neg_reward);
    let _ = writeln!(s, "final_avg_sim_time = {}", f.sim_time);
    let _ = writeln!(s, "final_episode_reroute_decisions = {}", r.reroutes.len());
    let _ = writeln!(s, "final_episode_reroute_switches = {switches}");
    s
}

/// Reads the mode and metrics written by [`run_phase`].
pub fn load_run(dir: &Path) -> Result<(Mode, Vec<EpisodeMetrics>), HarnessError> {
    let summary_path = dir.join("summary.txt");
    let summary =
        fs::read_to_string(&summary_path).map_err(|e| HarnessError::io(&summary_path, e))?;
    let mode = summary
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "mode")
        .and_then(|(_, v)| Mode::parse(v.trim()))
        .ok_or_else(|| HarnessError::Input(format!("{}: no mode line", summary_path.display())))?;
    let metrics_path = dir.join("metrics.csv");
    let f = fs::File::open(&metrics_path).map_err(|e| HarnessError::io(&metrics_path, e))?;
    Ok((mode, read_metrics(f)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    Width,
    /// Total layer count, input and output included.
    Depth,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<SweepAxis> {
        match s {
            "gamma" => Some(SweepAxis::Gamma),
            "width" => Some(SweepAxis::Width),
            "depth" => Some(SweepAxis::Depth),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::Width => "width",
            SweepAxis::Depth => "depth",
        }
    }

    pub fn values(self) -> &'static [f64] {
        match self {
            SweepAxis::Gamma => &[0.3, 0.5, 0.7, 0.9],
            SweepAxis::Width => &[200.0, 400.0, 600.0],
            SweepAxis::Depth => &[3.0, 5.0, 8.0],
        }
    }

    /// The value reported as best in the reference experiments.
    pub fn expected_best(self) -> f64 {
        match self {
            SweepAxis::Gamma => 0.5,
            SweepAxis::Width => 200.0,
            SweepAxis::Depth => 5.0,
        }
    }

    pub fn apply(self, config: &mut RunConfig, value: f64) {
        match self {
            SweepAxis::Gamma => config.train.gamma = value,
            SweepAxis::Width => config.train.hidden_width = value as usize,
            SweepAxis::Depth => config.train.hidden_count = (value as usize).saturating_sub(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub averages: FinalAverages,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub rank: usize,
    pub value: f64,
    pub mean_neg_reward: f64,
    pub mean_cum_delay: f64,
    pub expected_best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Best (least negative mean final reward) first.
    pub ranking: Vec<RankEntry>,
}

impl SweepTable {
    /// Observed rank of the value reported best in the reference runs.
    pub fn expected_best_rank(&self) -> Option<usize> {
        self.ranking
            .iter()
            .find(|r| r.expected_best)
            .map(|r| r.rank)
    }
}

pub fn rank_rows(axis: SweepAxis, rows: &[SweepRow]) -> Vec<RankEntry> {
    let mut entries: Vec<RankEntry> = axis
        .values()
        .iter()
        .filter_map(|&value| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.value == value).collect();
            if group.is_empty() {
                return None;
            }
            let n = group.len() as f64;
            Some(RankEntry {
                rank: 0,
                value,
                mean_neg_reward: group.iter().map(|r| r.averages.neg_reward).sum::<f64>() / n,
                mean_cum_delay: group.iter().map(|r| r.averages.cum_delay).sum::<f64>() / n,
                expected_best: value == axis.expected_best(),
            })
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_neg_reward
            .total_cmp(&a.mean_neg_reward)
            .then(a.value.total_cmp(&b.value))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    entries
}

/// One run per sweep value and seed, in parallel over at most `workers`
/// threads. Each run writes its artifacts under
/// `out/<axis>-<value>-seed<seed>/`; the comparison and ranking tables go
/// to `out/comparison.csv` and `out/ranking.csv`.
pub fn run_sweep(
    config: &RunConfig,
    axis: SweepAxis,
    mode: Mode,
    seeds: &[u64],
    out: &Path,
    workers: usize,
) -> Result<SweepTable, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Input(
            "a sweep needs at least one seed".into(),
        ));
    }
    if mode == Mode::Fixed {
        return Err(HarnessError::Input(
            "sweeps vary learning parameters; use rl or rl_reroute".into(),
        ));
    }
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let jobs: Vec<(f64, u64)> = axis
        .values()
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Input(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(value, seed)| {
                let mut cfg = config.clone();
                axis.apply(&mut cfg, value);
                let dir = out.join(format!("{}-{}-seed{}", axis.as_str(), value, seed));
                let result =
                    run_phase(&cfg, mode, seed, &dir).map_err(|e| HarnessError::Context {
                        context: format!("{} = {value}, seed {seed}", axis.as_str()),
                        source: Box::new(e),
                    })?;
                Ok(SweepRow {
                    value,
                    seed,
                    averages: final_averages(&result.metrics),
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;
    let ranking = rank_rows(axis, &rows);
    let table = SweepTable {
        axis,
        rows,
        ranking,
    };
    write_atomic(
        &out.join("comparison.csv"),
        comparison_csv(&table).as_bytes(),
    )?;
    write_atomic(&out.join("ranking.csv"), ranking_csv(&table).as_bytes())?;
    Ok(table)
}

pub fn comparison_csv(table: &SweepTable) -> String {
    let mut s = format!("{COMPARISON_HEADER}\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.value, r.seed, r.averages.cum_delay, r.averages.queue, r.averages.neg_reward
        );
    }
    s
}

pub fn ranking_csv(table: &SweepTable) -> String {
    let mut s = format!("{RANKING_HEADER}\n");
    for e in &table.ranking {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e.rank, e.value, e.mean_neg_reward, e.mean_cum_delay, e.expected_best
        );
    }
    s
}

/// Reductions relative to fixed-time control over the final quarter of
/// each series, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    pub fixed_sim_time: f64,
    pub rl_sim_time: f64,
    pub reroute_sim_time: f64,
    pub rl_time_reduction_pct: f64,
    pub reroute_time_reduction_pct: f64,
    pub rl_delay_reduction_pct: f64,
    pub reroute_delay_reduction_pct: f64,
}

fn reduction_pct(base: f64, value: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (base - value) / base
    }
}

pub fn summarize(
    fixed: &[EpisodeMetrics],
    rl: &[EpisodeMetrics],
    reroute: &[EpisodeMetrics],
) -> Result<Improvement, HarnessError> {
    if fixed.is_empty() || rl.is_empty() || reroute.is_empty() {
        return Err(HarnessError::Input(
            "summarize needs three non-empty series".into(),
        ));
    }
    let (f, r, rr) = (
        final_averages(fixed),
        final_averages(rl),
        final_averages(reroute),
    );
    Ok(Improvement {
        fixed_sim_time: f.sim_time,
        rl_sim_time: r.sim_time,
        reroute_sim_time: rr.sim_time,
        rl_time_reduction_pct: reduction_pct(f.sim_time, r.sim_time),
        reroute_time_reduction_pct: reduction_pct(f.sim_time, rr.sim_time),
        rl_delay_reduction_pct: reduction_pct(f.cum_delay, r.cum_delay),
        reroute_delay_reduction_pct: reduction_pct(f.cum_delay, rr.cum_delay),
    })
}

impl Improvement {
    /// `key = value` report including the reference figures.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fixed_mean_sim_time_s = {:.1}", self.fixed_sim_time);
        let _ = writeln!(s, "rl_mean_sim_time_s = {:.1}", self.rl_sim_time);
        let _ = writeln!(
            s,
            "rl_reroute_mean_sim_time_s = {:.1}",
            self.reroute_sim_time
        );
        let _ = writeln!(
            s,
            "rl_time_reduction_pct = {:.2}",
            self.rl_time_reduction_pct
        );
        let _ = writeln!(
            s,
            "rl_reroute_time_reduction_pct = {:.2}",
            self.reroute_time_reduction_pct
        );
        let _ = writeln!(
            s,
            "rl_delay_reduction_pct = {:.2}",
            self.rl_delay_reduction_pct
        );
        let _ = writeln!(
            s,
            "rl_reroute_delay_reduction_pct = {:.2}",
            self.reroute_delay_reduction_pct
        );
        let _ = writeln!(
            s,
            "reference_rl_time_reduction_pct = {REFERENCE_RL_TIME_REDUCTION_PCT}"
        );
        let _ = writeln!(
            s,
            "reference_rl_reroute_time_reduction_pct = {REFERENCE_RL_REROUTE_TIME_REDUCTION_PCT}"
        );
        let _ = writeln!(
            s,
            "reference_fixed_sim_time_s = {REFERENCE_FIXED_SIM_TIME_S}"
        );
        s
    }
}

/// Collects one series per mode from run directories.
pub fn summarize_dirs(dirs: &[PathBuf]) -> Result<Improvement, HarnessError> {
    let mut series: [Option<Vec<EpisodeMetrics>>; 3] = [None, None, None];
    for d in dirs {
        let (mode, metrics) = load_run(d)?;
        let slot = Mode::ALL
            .iter()
            .position(|&m| m == mode)
            .expect("known mode");
        if series[slot].replace(metrics).is_some() {
            return Err(HarnessError::Input(format!(
                "more than one `{}` run given",
                mode.as_str()
            )));
        }
    }
    let get = |i: usize| {
        series[i].as_deref().ok_or_else(|| {
            HarnessError::Input(format!(
                "no `{}` run among the directories",
                Mode::ALL[i].as_str()
            ))
        })
    };
    summarize(get(0)?, get(1)?, get(2)?)
}

/// Outcome of [`west_congestion_scenario`].
#[derive(Debug, Clone)]
pub struct ScriptedOutcome {
    pub net: Arc<RoadNetwork>,
    pub decisions: Vec<RerouteDecision>,
    /// Highest west-arm window density seen.
    pub peak_west_density: f64,
    pub sim: SimState,
}

/// West-to-east traffic held at red for `red_seconds` while cross traffic
/// has green, then released; rerouting runs at every window boundary.
/// `vehicles` depart one every two seconds.
pub fn west_congestion_scenario(
    vehicles: usize,
    red_seconds: u32,
    threshold: f64,
) -> Result<ScriptedOutcome, HarnessError> {
    let net = Arc::new(build_default_network());
    let id = |n: &str| {
        net.node_id(n)
            .ok_or_else(|| HarnessError::Input(format!("default network lacks node {n}")))
    };
    let (west, east) = (id("W")?, id("E")?);
    let schedule: Vec<ScheduledVehicle> = (0..vehicles)
        .map(|i| ScheduledVehicle {
            depart: 2 * i as u32,
            vtype: crate::simcore::VehicleType::Car,
            origin: west,
            destination: east,
        })
        .collect();
    let params = SimParams {
        initial_phase: Phase::new(0)?,
        ..SimParams::default()
    };
    let sim = SimState::new(net.clone(), &schedule, params)?;
    let mut env = SignalEnv {
        sim,
        green: 1,
        monitor: Some(CongestionMonitor::new(threshold)?),
        decisions: Vec::new(),
    };
    env.run(red_seconds)?;
    env.switch_to(Phase::new(2)?)?;
    while !env.sim.finished() {
        env.step()?;
    }
    let peak_west_density = env
        .sim
        .detector_log()
        .iter()
        .filter(|r| r.arm == crate::simcore::Arm::W)
        .map(|r| r.density)
        .fold(0.0, f64::max);
    Ok(ScriptedOutcome {
        net,
        decisions: env.decisions,
        peak_west_density,
        sim: env.sim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(times: &[u32], delays: &[f64]) -> Vec<EpisodeMetrics> {
        times
            .iter()
            .zip(delays)
            .enumerate()
            .map(|(i, (&t, &d))| EpisodeMetrics {
                episode: i,
                sim_time_s: t,
                cum_delay_s: d,
                ..Default::default()
            })
            .collect()
    }

    #[test]
    fn summary_arithmetic() {
        let fixed = series(&[100; 4], &[50.0; 4]);
        let same = summarize(&fixed, &fixed, &fixed).unwrap();
        assert_eq!(same.rl_time_reduction_pct, 0.0);
        let rl = series(&[80; 4], &[40.0; 4]);
        let rr = series(&[66; 4], &[25.0; 4]);
        let imp = summarize(&fixed, &rl, &rr).unwrap();
        assert!((imp.rl_time_reduction_pct - 20.0).abs() < 1e-12);
        assert!((imp.reroute_time_reduction_pct - 34.0).abs() < 1e-12);
        assert!((imp.reroute_delay_reduction_pct - 50.0).abs() < 1e-12);
        assert!(imp.report().contains("reference_fixed_sim_time_s = 7392"));
        assert!(summarize(&[], &rl, &rr).is_err());
    }

    #[test]
    fn summary_uses_final_quarter() {
        let fixed = series(&[100; 8], &[0.0; 8]);
        let rl = series(&[200, 200, 200, 200, 200, 200, 50, 50], &[0.0; 8]);
        let imp = summarize(&fixed, &rl, &rl).unwrap();
        assert!((imp.rl_time_reduction_pct - 50.0).abs() < 1e-12);
    }

    #[test]
    fn modes_and_axes() {
        assert_eq!(Mode::parse("rl-reroute"), Some(Mode::RlReroute));
        assert_eq!(Mode::parse("rl_reroute"), Some(Mode::RlReroute));
        assert_eq!(Mode::parse("bogus"), None);
        let mut cfg = RunConfig::desk();
        SweepAxis::Depth.apply(&mut cfg, 8.0);
        assert_eq!(cfg.train.hidden_count, 6);
        SweepAxis::Width.apply(&mut cfg, 600.0);
        assert_eq!(cfg.train.hidden_width, 600);
        assert_eq!(SweepAxis::Gamma.values().len(), 4);
    }

    #[test]
    fn ranking_orders_by_reward() {
        let row = |value, seed, neg| SweepRow {
            value,
            seed,
            averages: FinalAverages {
                cum_delay: 0.0,
                queue: 0.0,
                neg_reward: neg,
                sim_time: 0.0,
            },
        };
        let rows = [
            row(0.3, 1, -10.0),
            row(0.3, 2, -20.0),
            row(0.5, 1, -30.0),
            row(0.7, 1, -5.0),
            row(0.9, 1, -40.0),
        ];
        let ranking = rank_rows(SweepAxis::Gamma, &rows);
        let order: Vec<f64> = ranking.iter().map(|e| e.value).collect();
        assert_eq!(order, vec![0.7, 0.3, 0.5, 0.9]);
        assert_eq!(ranking[1].mean_neg_reward, -15.0);
        let table = SweepTable {
            axis: SweepAxis::Gamma,
            rows: rows.to_vec(),
            ranking,
        };
        assert_eq!(table.expected_best_rank(), Some(3));
        assert!(ranking_csv(&table).starts_with(RANKING_HEADER));
    }

    #[test]
    fn zero_vehicle_fixed_run() {
        let mut cfg = RunConfig::desk();
        cfg.vehicles = 0;
        cfg.train.episodes = 2;
        let scenario = Scenario::new(cfg).unwrap();
        let r = run_fixed_time(&scenario, 1).unwrap();
        assert_eq!(r.metrics.len(), 2);
        for m in &r.metrics {
            assert_eq!(m.sim_time_s, 0);
            assert_eq!(m.cum_delay_s, 0.0);
            assert_eq!(m.avg_queue_len, 0.0);
            assert_eq!(m.cum_negative_reward, 0.0);
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, b"a\n").unwrap();
        write_atomic(&p, b"b\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"b\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
