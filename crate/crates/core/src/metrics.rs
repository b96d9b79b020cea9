//! Per-episode performance figures and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const METRICS_HEADER: &str = "episode,cum_delay_s,avg_queue_len,cum_negative_reward,sim_time_s";

#[derive(Debug, Error)]
#[error("metrics csv: {0}")]
pub struct MetricsError(String);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Halted-vehicle seconds on the approaches.
    pub cum_delay_s: f64,
    /// Mean number of halted approach vehicles per simulated second.
    pub avg_queue_len: f64,
    /// Sum of the negative agent rewards; zero for fixed-time control.
    pub cum_negative_reward: f64,
    pub sim_time_s: u32,
    pub arrived: usize,
    pub spawned: usize,
}

impl EpisodeMetrics {
    /// Fills the delay-derived fields from a finished simulation.
    pub fn from_totals(
        episode: usize,
        total_delay: u64,
        sim_time_s: u32,
        cum_negative_reward: f64,
        arrived: usize,
        spawned: usize,
    ) -> Self {
        let cum_delay_s = total_delay as f64;
        EpisodeMetrics {
            episode,
            cum_delay_s,
            avg_queue_len: if sim_time_s > 0 {
                cum_delay_s / f64::from(sim_time_s)
            } else {
                0.0
            },
            cum_negative_reward,
            sim_time_s,
            arrived,
            spawned,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    episode: usize,
    cum_delay_s: f64,
    avg_queue_len: f64,
    cum_negative_reward: f64,
    sim_time_s: u32,
}

pub fn write_metrics<W: Write>(rows: &[EpisodeMetrics], out: W) -> Result<(), MetricsError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    // header written by hand so that an empty series still has one
    w.write_record(METRICS_HEADER.split(','))
        .map_err(|e| MetricsError(e.to_string()))?;
    for m in rows {
        w.serialize(Row {
            episode: m.episode,
            cum_delay_s: m.cum_delay_s,
            avg_queue_len: m.avg_queue_len,
            cum_negative_reward: m.cum_negative_reward,
            sim_time_s: m.sim_time_s,
        })
        .map_err(|e| MetricsError(e.to_string()))?;
    }
    w.flush().map_err(|e| MetricsError(e.to_string()))
}

/// Reads a metrics CSV. Arrival counts are not stored and come back as 0.
pub fn read_metrics<R: Read>(input: R) -> Result<Vec<EpisodeMetrics>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| MetricsError(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(MetricsError(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(|e| MetricsError(e.to_string()))?;
            Ok(EpisodeMetrics {
                episode: row.episode,
                cum_delay_s: row.cum_delay_s,
                avg_queue_len: row.avg_queue_len,
                cum_negative_reward: row.cum_negative_reward,
                sim_time_s: row.sim_time_s,
                arrived: 0,
                spawned: 0,
            })
        })
        .collect()
}

/// Rows in the last quarter of a series (at least one row).
pub fn final_quarter(rows: &[EpisodeMetrics]) -> &[EpisodeMetrics] {
    let n = rows.len();
    let k = (n / 4).max(1).min(n);
    &rows[n - k..]
}

/// Rows in the first quarter of a series (at least one row).
pub fn first_quarter(rows: &[EpisodeMetrics]) -> &[EpisodeMetrics] {
    let n = rows.len();
    &rows[..(n / 4).max(1).min(n)]
}

pub fn mean_of(rows: &[EpisodeMetrics], field: impl Fn(&EpisodeMetrics) -> f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(field).sum::<f64>() / rows.len() as f64
}
