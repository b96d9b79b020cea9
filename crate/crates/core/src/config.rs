//! Run configuration and its `key = value` file form.
//!
//! ```text
//! # desk run with a wider network
//! episodes = 50
//! hidden_width = 400
//! threshold = 0.04
//! ```
//!
//! Keys are the [`TrainConfig`] field names plus `network` (path to a
//! network file), `schedule` (path to a schedule CSV), `threshold`
//! (rerouting density, veh/m), `fixed_green` (s), `vehicles`, `horizon`
//! (departure spread, s) and `time_cap` (s). Relative paths resolve against
//! the config file's directory.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::pgagent::TrainConfig;
use crate::rerouter::DEFAULT_DENSITY_THRESHOLD;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub network: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub threshold: f64,
    pub fixed_green: u32,
    pub vehicles: usize,
    pub horizon: u32,
    pub time_cap: u32,
}

impl RunConfig {
    /// Small scenario that trains in minutes.
    pub fn desk() -> Self {
        RunConfig {
            train: TrainConfig {
                episodes: 50,
                max_agent_steps: 300,
                ..TrainConfig::default()
            },
            network: None,
            schedule: None,
            threshold: DEFAULT_DENSITY_THRESHOLD,
            fixed_green: 30,
            vehicles: 1000,
            horizon: 300,
            time_cap: 9000,
        }
    }

    /// The full-size tables: 4000 vehicles, 200 episodes, 2500 decisions.
    pub fn full_scale() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            vehicles: 4000,
            horizon: 5400,
            ..RunConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError::Value {
            key: "train".into(),
            message: e.to_string(),
        })?;
        let fail = |key: &str, message: &str| {
            Err(ConfigError::Value {
                key: key.into(),
                message: message.into(),
            })
        };
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return fail("threshold", "must be positive");
        }
        if self.fixed_green == 0 {
            return fail("fixed_green", "must be at least 1");
        }
        if self.horizon == 0 {
            return fail("horizon", "must be at least 1");
        }
        if self.time_cap == 0 {
            return fail("time_cap", "must be at least 1");
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str, base_dir: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key.trim(), value.trim(), base_dir)?;
        }
        self.validate()
    }

    /// Reads a config file over the given base profile.
    pub fn load(path: &Path, base: RunConfig) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = base;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.apply_text(&text, dir)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::Value {
                key: key.into(),
                message: format!("`{value}`: {e}"),
            })
        }
        let t = &mut self.train;
        match key {
            "episodes" => t.episodes = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "buffer_capacity" => t.buffer_capacity = parse(key, value)?,
            "gamma" => t.gamma = parse(key, value)?,
            "green_duration" => t.green_duration = parse(key, value)?,
            "yellow_duration" => t.yellow_duration = parse(key, value)?,
            "max_agent_steps" => t.max_agent_steps = parse(key, value)?,
            "hidden_width" => t.hidden_width = parse(key, value)?,
            "hidden_count" => t.hidden_count = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "value_head" => t.value_head = parse(key, value)?,
            "network" => self.network = Some(base_dir.join(value)),
            "schedule" => self.schedule = Some(base_dir.join(value)),
            "threshold" => self.threshold = parse(key, value)?,
            "fixed_green" => self.fixed_green = parse(key, value)?,
            "vehicles" => self.vehicles = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "time_cap" => self.time_cap = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// `key = value` text that reproduces this config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut lines = vec![
            format!("episodes = {}", t.episodes),
            format!("batch_size = {}", t.batch_size),
            format!("buffer_capacity = {}", t.buffer_capacity),
            format!("gamma = {}", t.gamma),
            format!("green_duration = {}", t.green_duration),
            format!("yellow_duration = {}", t.yellow_duration),
            format!("max_agent_steps = {}", t.max_agent_steps),
            format!("hidden_width = {}", t.hidden_width),
            format!("hidden_count = {}", t.hidden_count),
            format!("learning_rate = {}", t.learning_rate),
            format!("seed = {}", t.seed),
            format!("value_head = {}", t.value_head),
            format!("threshold = {}", self.threshold),
            format!("fixed_green = {}", self.fixed_green),
            format!("vehicles = {}", self.vehicles),
            format!("horizon = {}", self.horizon),
            format!("time_cap = {}", self.time_cap),
        ];
        if let Some(p) = &self.network {
            lines.push(format!("network = {}", p.display()));
        }
        if let Some(p) = &self.schedule {
            lines.push(format!("schedule = {}", p.display()));
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let desk = RunConfig::desk();
        assert_eq!(desk.vehicles, 1000);
        assert_eq!(desk.train.episodes, 50);
        assert_eq!(desk.train.max_agent_steps, 300);
        let full = RunConfig::full_scale();
        assert_eq!(full.vehicles, 4000);
        assert_eq!(full.train.episodes, 200);
        assert_eq!(full.train.batch_size, 200);
        assert_eq!(full.train.buffer_capacity, 4500);
        assert_eq!(full.train.gamma, 0.5);
        assert_eq!(full.train.max_agent_steps, 2500);
        assert_eq!(full.time_cap, 9000);
    }

    #[test]
    fn parse_keys_and_comments() {
        let mut cfg = RunConfig::desk();
        cfg.apply_text(
            "# comment\n gamma = 0.7 \nhidden_width=400 # trailing\n\nnetwork = nets/a.net\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(cfg.train.gamma, 0.7);
        assert_eq!(cfg.train.hidden_width, 400);
        assert_eq!(cfg.network, Some(PathBuf::from("/cfg/nets/a.net")));
    }

    #[test]
    fn errors_name_the_key() {
        let mut cfg = RunConfig::desk();
        let e = cfg.apply_text("gamm = 0.5\n", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("gamm"));
        let e = cfg
            .apply_text("episodes = many\n", Path::new("."))
            .unwrap_err();
        assert!(e.to_string().contains("episodes"));
        let e = cfg
            .apply_text("threshold = -1\n", Path::new("."))
            .unwrap_err();
        assert!(e.to_string().contains("threshold"));
        assert!(matches!(
            cfg.apply_text("just words\n", Path::new(".")),
            Err(ConfigError::Syntax { line: 1 })
        ));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::full_scale();
        cfg.train.seed = 11;
        cfg.threshold = 0.031;
        let mut back = RunConfig::desk();
        back.apply_text(&cfg.to_text(), Path::new(".")).unwrap();
        assert_eq!(back, cfg);
    }
}
