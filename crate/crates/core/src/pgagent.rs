//! Policy-gradient signal controller.
//!
//! The agent observes the 80 occupancy cells, samples a phase from the
//! softmax policy, and is rewarded by the drop in cumulative waiting time
//! over the resulting green period. After every episode a batch is sampled
//! from the replay buffer, regrouped into per-episode traces ordered by
//! step, turned into discounted returns and advantages, and used for one
//! gradient-ascent step on `sum log pi(a|s) * advantage`.
//!
//! Sampling from a replay buffer makes the estimate off-policy and the
//! regrouped traces have gaps; both are accepted as part of the training
//! scheme rather than corrected.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metrics::EpisodeMetrics;
use crate::neuralnet::{
    init_network, Adam, Gradients, Head, Mlp, NnError, ACTION_COUNT, STATE_DIM,
};
use crate::simcore::SimError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("state has {0} cells, expected {STATE_DIM}")]
    StateLength(usize),
    #[error("non-finite advantage")]
    NonFiniteAdvantage,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<AgentError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    /// Seconds of green per agent decision.
    pub green_duration: u32,
    pub yellow_duration: u32,
    /// Agent decisions per episode.
    pub max_agent_steps: usize,
    pub hidden_width: usize,
    pub hidden_count: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Fit a value network by least squares and use it as the baseline
    /// instead of the per-step batch mean.
    pub value_head: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 200,
            batch_size: 200,
            buffer_capacity: 4500,
            gamma: 0.5,
            green_duration: 4,
            yellow_duration: 2,
            max_agent_steps: 2500,
            hidden_width: 200,
            hidden_count: 3,
            learning_rate: 1e-3,
            seed: 0,
            value_head: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return fail("batch_size must be between 1 and buffer_capacity");
        }
        if self.green_duration == 0 || self.yellow_duration == 0 {
            return fail("green and yellow durations must be at least 1 s");
        }
        if self.hidden_width == 0 || self.hidden_count == 0 {
            return fail("hidden_width and hidden_count must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Occupancy as a 0/1 vector.
pub fn encode_state(sensors: &[bool]) -> Result<Vec<f64>, AgentError> {
    if sensors.len() != STATE_DIM {
        return Err(AgentError::StateLength(sensors.len()));
    }
    Ok(sensors.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
}

/// Positive when waiting time fell.
pub fn compute_reward(old_wait: f64, new_wait: f64) -> f64 {
    old_wait - new_wait
}

/// Samples an action from the policy's distribution at `state`.
pub fn select_action<R: Rng + ?Sized>(
    net: &Mlp,
    state: &[f64],
    rng: &mut R,
) -> Result<usize, AgentError> {
    let p = net.forward(state)?;
    Ok(sample_categorical(&p, rng.random::<f64>()))
}

fn sample_categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum just below 1; take the last action
    // with nonzero mass
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
}

/// `R_t = r_t + gamma * R_{t+1}`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut next = 0.0;
    for t in (0..rewards.len()).rev() {
        next = rewards[t] + gamma * next;
        out[t] = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub episode: usize,
    pub step: usize,
}

/// Bounded FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `min(n, len)` distinct transitions chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

/// One episode's (possibly sub-sampled) decisions in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
}

impl EpisodeTrace {
    pub fn new(states: Vec<Vec<f64>>, actions: Vec<usize>, rewards: Vec<f64>, gamma: f64) -> Self {
        let returns = discounted_returns(&rewards, gamma);
        EpisodeTrace {
            states,
            actions,
            rewards,
            returns,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn cumulative_negative_reward(&self) -> f64 {
        self.rewards.iter().map(|&r| r.min(0.0)).sum()
    }
}

/// Groups transitions by episode, orders each group by step, and computes
/// returns over the group. Traces come out in episode order.
pub fn traces_from_transitions(transitions: &[&Transition], gamma: f64) -> Vec<EpisodeTrace> {
    let mut groups: BTreeMap<usize, Vec<&Transition>> = BTreeMap::new();
    for t in transitions {
        groups.entry(t.episode).or_default().push(t);
    }
    groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|t| t.step);
            EpisodeTrace::new(
                g.iter().map(|t| t.state.clone()).collect(),
                g.iter().map(|t| t.action).collect(),
                g.iter().map(|t| t.reward).collect(),
                gamma,
            )
        })
        .collect()
}

/// Mean return at each step index over the traces that reach it.
pub fn baseline_values(batch: &[EpisodeTrace]) -> Vec<f64> {
    let longest = batch.iter().map(EpisodeTrace::len).max().unwrap_or(0);
    let mut sum = vec![0.0; longest];
    let mut count = vec![0usize; longest];
    for trace in batch {
        for (t, &r) in trace.returns.iter().enumerate() {
            sum[t] += r;
            count[t] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

/// `R_t - V(t)` per trace, with the batch-mean baseline.
pub fn advantages(batch: &[EpisodeTrace]) -> Vec<Vec<f64>> {
    let v = baseline_values(batch);
    batch
        .iter()
        .map(|trace| trace.returns.iter().zip(&v).map(|(r, b)| r - b).collect())
        .collect()
}

/// `(1/m) sum_i sum_t grad log pi(a_t | s_t) * A_t`, with `m` traces.
pub fn policy_gradient(
    net: &Mlp,
    batch: &[EpisodeTrace],
    advantages: &[Vec<f64>],
) -> Result<Gradients, AgentError> {
    let mut total = Gradients::zeros_like(net);
    if batch.is_empty() {
        return Ok(total);
    }
    for (trace, adv) in batch.iter().zip(advantages) {
        for ((state, &action), &a) in trace.states.iter().zip(&trace.actions).zip(adv) {
            if !a.is_finite() {
                return Err(AgentError::NonFiniteAdvantage);
            }
            if a != 0.0 {
                total.add_scaled(&net.logp_gradient(state, action)?, a);
            }
        }
    }
    total.scale(1.0 / batch.len() as f64);
    Ok(total)
}

/// One ascent step on the batch with the batch-mean baseline.
pub fn policy_update(
    net: &mut Mlp,
    batch: &[EpisodeTrace],
    opt: &mut Adam,
) -> Result<(), AgentError> {
    let adv = advantages(batch);
    let g = policy_gradient(net, batch, &adv)?;
    net.apply_update(&g, 1.0, opt)?;
    Ok(())
}

/// Learned state-value baseline fitted by mean squared error.
#[derive(Debug, Clone)]
pub struct ValueBaseline {
    pub net: Mlp,
    opt: Adam,
}

impl ValueBaseline {
    pub fn new(hidden_width: usize, lr: f64, seed: u64) -> Result<Self, AgentError> {
        let net = Mlp::new(&[STATE_DIM, hidden_width, 1], Head::Linear, seed)?;
        let opt = Adam::new(&net, lr);
        Ok(ValueBaseline { net, opt })
    }

    pub fn advantages(&self, batch: &[EpisodeTrace]) -> Result<Vec<Vec<f64>>, AgentError> {
        batch
            .iter()
            .map(|trace| {
                trace
                    .states
                    .iter()
                    .zip(&trace.returns)
                    .map(|(s, r)| Ok(r - self.net.value(s)?))
                    .collect()
            })
            .collect()
    }

    /// One descent step on the mean squared error to the returns.
    pub fn fit(&mut self, batch: &[EpisodeTrace]) -> Result<(), AgentError> {
        let mut g = Gradients::zeros_like(&self.net);
        let mut n = 0usize;
        for trace in batch {
            for (s, &r) in trace.states.iter().zip(&trace.returns) {
                let err = self.net.value(s)? - r;
                g.add_scaled(&self.net.value_gradient(s)?, err);
                n += 1;
            }
        }
        if n > 0 {
            self.net.apply_update(&g, -1.0 / n as f64, &mut self.opt)?;
        }
        Ok(())
    }
}

/// What the training loop needs from a controlled intersection.
pub trait Environment {
    fn observe(&self) -> Vec<bool>;
    fn cumulative_wait(&self) -> f64;
    /// Applies phase `action` and runs the following green period.
    fn act(&mut self, action: usize) -> Result<(), AgentError>;
    fn finished(&self) -> bool;
    /// Episode figures once the loop stops.
    fn metrics(&self, episode: usize, cum_negative_reward: f64) -> EpisodeMetrics;
}

/// Seed of episode `episode` in a run seeded with `base`.
pub fn episode_seed(base: u64, episode: usize) -> u64 {
    base.wrapping_add((episode as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// What one training episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub rewards: Vec<f64>,
    /// Cumulative wait before the first and after the last decision.
    pub initial_wait: f64,
    pub final_wait: f64,
}

/// Runs one episode with the current policy, filling the buffer.
pub fn run_episode<E: Environment, R: Rng + ?Sized>(
    env: &mut E,
    net: &Mlp,
    config: &TrainConfig,
    episode: usize,
    buffer: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<EpisodeOutcome, AgentError> {
    let mut state = encode_state(&env.observe())?;
    let initial_wait = env.cumulative_wait();
    let mut wait = initial_wait;
    let mut rewards = Vec::new();
    while !env.finished() && rewards.len() < config.max_agent_steps {
        let action = select_action(net, &state, rng)?;
        debug_assert!(action < ACTION_COUNT);
        env.act(action)?;
        let new_wait = env.cumulative_wait();
        let reward = compute_reward(wait, new_wait);
        let next_state = encode_state(&env.observe())?;
        buffer.push(Transition {
            state: std::mem::replace(&mut state, next_state.clone()),
            action,
            reward,
            next_state,
            episode,
            step: rewards.len(),
        });
        rewards.push(reward);
        wait = new_wait;
    }
    let neg: f64 = rewards.iter().map(|&r| r.min(0.0)).sum();
    Ok(EpisodeOutcome {
        metrics: env.metrics(episode, neg),
        rewards,
        initial_wait,
        final_wait: wait,
    })
}

/// The training loop: one episode per iteration, one policy update after
/// each. `make_env(episode, seed)` builds a fresh environment.
pub fn run_training<E, F>(
    config: &TrainConfig,
    make_env: F,
) -> Result<(Mlp, Vec<EpisodeMetrics>), AgentError>
where
    E: Environment,
    F: FnMut(usize, u64) -> Result<E, AgentError>,
{
    run_training_with(config, make_env, |_, _| {})
}

/// As [`run_training`], also handing every finished episode's environment
/// and outcome to `inspect`.
pub fn run_training_with<E, F, I>(
    config: &TrainConfig,
    mut make_env: F,
    mut inspect: I,
) -> Result<(Mlp, Vec<EpisodeMetrics>), AgentError>
where
    E: Environment,
    F: FnMut(usize, u64) -> Result<E, AgentError>,
    I: FnMut(&E, &EpisodeOutcome),
{
    config.validate()?;
    let mut net = init_network(config.hidden_width, config.hidden_count, config.seed)?;
    let mut opt = Adam::new(&net, config.learning_rate);
    let mut value = if config.value_head {
        Some(ValueBaseline::new(
            config.hidden_width,
            config.learning_rate,
            config.seed ^ 0x5A5A,
        )?)
    } else {
        None
    };
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let wrap = |e: AgentError| AgentError::Episode {
            episode,
            source: Box::new(e),
        };
        let mut env = make_env(episode, episode_seed(config.seed, episode)).map_err(wrap)?;
        let outcome =
            run_episode(&mut env, &net, config, episode, &mut buffer, &mut rng).map_err(wrap)?;
        inspect(&env, &outcome);
        history.push(outcome.metrics);

        let sampled = buffer.sample(config.batch_size, &mut rng);
        let batch = traces_from_transitions(&sampled, config.gamma);
        if batch.is_empty() {
            continue;
        }
        match value.as_mut() {
            None => policy_update(&mut net, &batch, &mut opt).map_err(wrap)?,
            Some(v) => {
                let adv = v.advantages(&batch).map_err(wrap)?;
                let g = policy_gradient(&net, &batch, &adv).map_err(wrap)?;
                net.apply_update(&g, 1.0, &mut opt)
                    .map_err(|e| wrap(e.into()))?;
                v.fit(&batch).map_err(wrap)?;
            }
        }
    }
    Ok((net, history))
}
