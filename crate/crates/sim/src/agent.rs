//! The attacker policies: random search, credential-cache lookup, tabular
//! Q-learning, deep Q-learning, and the greedy "exploiting" variants of the
//! two learners.
//!
//! All policies share one interface — observe a state, pick an action index,
//! optionally learn from the resulting transition — so the benchmark harness
//! can drive them interchangeably. Learners are trained by the free functions
//! [`train_tabular`] and [`train_dql`], which own the exploration schedule;
//! the policy structs then either resume the learned artifact with residual
//! exploration (learning mode) or follow it greedily (exploiting mode).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::env::{AttackEnv, EnvError, EnvState};
use crate::nn::{encode_features, DqlConfig, Mlp, NnError, ReplayBuffer, Transition};
use crate::nn::bellman_targets;
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid learning parameters: {0}")]
    InvalidParams(String),
    /// The deep Q-learner's loss blew past its ceiling or went non-finite.
    #[error("deep Q-learning diverged at gradient step {gradient_step} with loss {loss}")]
    Diverged { gradient_step: u64, loss: f64 },
    #[error("malformed learned artifact: {0}")]
    Artifact(String),
}

/// Packed bit-encoding of one environment state: owned, discovered,
/// credential, executed-vulnerability, and collected bitmaps concatenated
/// low-to-high in declaration order. Injective on any one scenario, so it can
/// key a Q-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateKey(pub u128);

impl StateKey {
    pub fn from_state(env: &AttackEnv, state: &EnvState) -> StateKey {
        let widths = env.bit_widths();
        let masks = [
            state.owned,
            state.discovered,
            state.credentials,
            state.executed,
            state.collected,
        ];
        let mut key = 0u128;
        let mut shift = 0;
        for (mask, width) in masks.into_iter().zip(widths) {
            key |= (mask as u128) << shift;
            shift += width;
        }
        StateKey(key)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct QTableFile {
    action_count: usize,
    /// Decimal state keys, sorted by the map for stable artifacts.
    entries: BTreeMap<String, Vec<f64>>,
}

/// State-action value estimates. Unseen states read as all-zero rows, so the
/// table behaves as if defined over the whole (enormous) key space.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    action_count: usize,
    rows: HashMap<u128, Vec<f64>>,
}

impl QTable {
    pub fn new(action_count: usize) -> QTable {
        QTable {
            action_count,
            rows: HashMap::new(),
        }
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    /// Number of states actually visited.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Value row for a state; zeros if never updated.
    pub fn values(&self, key: StateKey) -> Vec<f64> {
        self.rows
            .get(&key.0)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.action_count])
    }

    pub fn row_mut(&mut self, key: StateKey) -> &mut Vec<f64> {
        self.rows
            .entry(key.0)
            .or_insert_with(|| vec![0.0; self.action_count])
    }

    /// Highest value in a state's row, or 0 for unseen states.
    pub fn best_value(&self, key: StateKey) -> f64 {
        match self.rows.get(&key.0) {
            Some(row) => row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
            None => 0.0,
        }
    }

    /// Stable JSON artifact: entries keyed by decimal state key.
    pub fn to_json(&self) -> String {
        let file = QTableFile {
            action_count: self.action_count,
            entries: self
                .rows
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        };
        let mut text = serde_json::to_string(&file).expect("Q-table serialization");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<QTable, AgentError> {
        let file: QTableFile =
            serde_json::from_str(text).map_err(|e| AgentError::Artifact(e.to_string()))?;
        let mut rows = HashMap::with_capacity(file.entries.len());
        for (key, row) in file.entries {
            let key: u128 = key
                .parse()
                .map_err(|_| AgentError::Artifact(format!("bad state key {key:?}")))?;
            if row.len() != file.action_count {
                return Err(AgentError::Artifact(format!(
                    "state {key} has {} values for an action space of {}",
                    row.len(),
                    file.action_count
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AgentError::Artifact(format!("state {key} has non-finite values")));
            }
            rows.insert(key, row);
        }
        Ok(QTable {
            action_count: file.action_count,
            rows,
        })
    }
}

/// Exploration and update-rule knobs shared by both learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays linearly; constant afterwards.
    pub epsilon_decay_episodes: u32,
    pub episodes: u32,
    pub step_budget: u32,
}

impl Default for LearningParams {
    /// Conservative defaults that converge on the bundled scenario in
    /// seconds: decay spans the first 80% of 500 episodes.
    fn default() -> Self {
        LearningParams {
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 0.9,
            epsilon_end: 0.1,
            epsilon_decay_episodes: 400,
            episodes: 500,
            step_budget: 100,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AgentError::InvalidParams(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(AgentError::InvalidParams(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        let eps_ok = (0.0..=1.0).contains(&self.epsilon_end)
            && self.epsilon_end <= self.epsilon_start
            && self.epsilon_start <= 1.0;
        if !eps_ok {
            return Err(AgentError::InvalidParams(format!(
                "epsilon must satisfy 1 >= start ({}) >= end ({}) >= 0",
                self.epsilon_start, self.epsilon_end
            )));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over the first
    /// `epsilon_decay_episodes` episodes, constant at the end value after.
    pub fn epsilon_at(&self, episode: u32) -> f64 {
        if episode >= self.epsilon_decay_episodes || self.epsilon_decay_episodes == 0 {
            return self.epsilon_end;
        }
        let progress = episode as f64 / self.epsilon_decay_episodes as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress
    }
}

/// Uniform over the whole enumerated action list, valid and invalid alike.
pub fn random_policy(action_count: usize, rng: &mut impl Rng) -> usize {
    assert!(action_count > 0, "empty action space");
    rng.random_range(0..action_count)
}

/// Table-2 credential cache lookup: if any held credential opens a connection
/// to a node not yet owned, connect (uniformly among the candidates);
/// otherwise poke around with a uniformly random non-connect action.
pub fn credential_lookup_policy(env: &AttackEnv, state: &EnvState, rng: &mut impl Rng) -> usize {
    let mut connects = Vec::new();
    let mut others = Vec::new();
    for index in 0..env.action_count() {
        match env.connect_indices(index) {
            Some((target, credential)) => {
                let held = state.credentials & (1 << credential) != 0;
                let owned = state.owned & (1 << target) != 0;
                if held && !owned {
                    connects.push(index);
                }
            }
            None => others.push(index),
        }
    }
    let pool = if !connects.is_empty() {
        &connects
    } else if !others.is_empty() {
        &others
    } else {
        // Degenerate scenario where every action is a connect: fall back to
        // the full list rather than panicking.
        return random_policy(env.action_count(), rng);
    };
    pool[rng.random_range(0..pool.len())]
}

/// Lowest-index argmax, the tie-break used everywhere for determinism.
pub fn argmax(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "empty value vector");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a uniform action, otherwise greedy. The random
/// draw happens unconditionally so the caller's stream advances identically
/// regardless of the branch taken.
pub fn epsilon_greedy(values: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    assert!(!values.is_empty(), "empty value vector");
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        rng.random_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// Greedy readout of the table; never mutates it.
pub fn exploit_policy(q: &QTable, key: StateKey) -> usize {
    argmax(&q.values(key))
}

/// One temporal-difference update:
/// `Q(s,a) += alpha * (r + gamma * (done ? 0 : max Q(s',.)) - Q(s,a))`.
pub fn q_update(
    q: &mut QTable,
    s: StateKey,
    a: usize,
    r: f64,
    s_next: StateKey,
    done: bool,
    alpha: f64,
    gamma: f64,
) {
    let next_best = if done { 0.0 } else { q.best_value(s_next) };
    let row = q.row_mut(s);
    row[a] += alpha * (r + gamma * next_best - row[a]);
}

/// Whether a policy updates internal state as it acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Learning,
    Exploiting,
}

/// One environment step as seen by a learning policy.
#[derive(Debug, Clone)]
pub struct StepTransition {
    pub prev: EnvState,
    pub action: usize,
    pub reward: f64,
    pub next: EnvState,
    pub done: bool,
}

/// Common driver interface: the harness calls `act`, applies the action, and
/// hands the transition back through `learn`.
pub trait Policy {
    fn act(&mut self, env: &AttackEnv, state: &EnvState, rng: &mut ChaCha8Rng) -> usize;

    fn learn(
        &mut self,
        _env: &AttackEnv,
        _transition: &StepTransition,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(), AgentError> {
        Ok(())
    }

    fn mode(&self) -> Mode;

    fn name(&self) -> &'static str;
}

/// Pure random search.
#[derive(Debug, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, env: &AttackEnv, _state: &EnvState, rng: &mut ChaCha8Rng) -> usize {
        random_policy(env.action_count(), rng)
    }

    fn mode(&self) -> Mode {
        Mode::Exploiting
    }

    fn name(&self) -> &'static str {
        "random"
    }
}

/// Credential cache lookup (no learned state).
#[derive(Debug, Default)]
pub struct CredentialLookupPolicy;

impl Policy for CredentialLookupPolicy {
    fn act(&mut self, env: &AttackEnv, state: &EnvState, rng: &mut ChaCha8Rng) -> usize {
        credential_lookup_policy(env, state, rng)
    }

    fn mode(&self) -> Mode {
        Mode::Exploiting
    }

    fn name(&self) -> &'static str {
        "cred-lookup"
    }
}

/// Tabular Q-learning in its learning phase: epsilon-greedy action choice and
/// temporal-difference updates continue as it runs. Construct via [`resume`]
/// to evaluate a trained table with residual exploration, or [`fresh`] to
/// start from zeros.
///
/// [`resume`]: TabularQPolicy::resume
/// [`fresh`]: TabularQPolicy::fresh
#[derive(Debug)]
pub struct TabularQPolicy {
    q: QTable,
    epsilon: f64,
    alpha: f64,
    gamma: f64,
}

impl TabularQPolicy {
    pub fn fresh(env: &AttackEnv, params: &LearningParams) -> TabularQPolicy {
        TabularQPolicy {
            q: QTable::new(env.action_count()),
            epsilon: params.epsilon_start,
            alpha: params.alpha,
            gamma: params.gamma,
        }
    }

    /// Continue from a trained table at the end-of-schedule exploration rate.
    pub fn resume(q: QTable, params: &LearningParams) -> TabularQPolicy {
        TabularQPolicy {
            q,
            epsilon: params.epsilon_end,
            alpha: params.alpha,
            gamma: params.gamma,
        }
    }

    pub fn table(&self) -> &QTable {
        &self.q
    }
}

impl Policy for TabularQPolicy {
    fn act(&mut self, env: &AttackEnv, state: &EnvState, rng: &mut ChaCha8Rng) -> usize {
        let key = StateKey::from_state(env, state);
        epsilon_greedy(&self.q.values(key), self.epsilon, rng)
    }

    fn learn(
        &mut self,
        env: &AttackEnv,
        t: &StepTransition,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(), AgentError> {
        let s = StateKey::from_state(env, &t.prev);
        let s_next = StateKey::from_state(env, &t.next);
        q_update(&mut self.q, s, t.action, t.reward, s_next, t.done, self.alpha, self.gamma);
        Ok(())
    }

    fn mode(&self) -> Mode {
        Mode::Learning
    }

    fn name(&self) -> &'static str {
        "q"
    }
}

/// Greedy rollout of a learned Q-table; read-only.
#[derive(Debug)]
pub struct ExploitQPolicy {
    q: QTable,
}

impl ExploitQPolicy {
    pub fn new(q: QTable) -> ExploitQPolicy {
        ExploitQPolicy { q }
    }
}

impl Policy for ExploitQPolicy {
    fn act(&mut self, env: &AttackEnv, state: &EnvState, _rng: &mut ChaCha8Rng) -> usize {
        exploit_policy(&self.q, StateKey::from_state(env, state))
    }

    fn mode(&self) -> Mode {
        Mode::Exploiting
    }

    fn name(&self) -> &'static str {
        "exploit-q"
    }
}

/// The deep Q-learning training core: online and target networks, a replay
/// buffer, and the gradient-step counter that schedules target refreshes.
#[derive(Debug)]
pub struct DqlAgent {
    online: Mlp,
    target: Mlp,
    buffer: ReplayBuffer,
    grad_steps: u64,
    gamma: f64,
    config: DqlConfig,
}

impl DqlAgent {
    /// Fresh seeded networks sized for the environment.
    pub fn new(
        input_dim: usize,
        action_count: usize,
        gamma: f64,
        config: DqlConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<DqlAgent, AgentError> {
        config.validate()?;
        let online = Mlp::new(&config.layer_sizes(input_dim, action_count), rng);
        let target = online.clone();
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        Ok(DqlAgent {
            online,
            target,
            buffer,
            grad_steps: 0,
            gamma,
            config,
        })
    }

    /// Continue training from a saved network. The buffer starts empty; the
    /// target begins as a copy of the online network.
    pub fn resume(net: Mlp, gamma: f64, config: DqlConfig) -> Result<DqlAgent, AgentError> {
        config.validate()?;
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        Ok(DqlAgent {
            target: net.clone(),
            online: net,
            buffer,
            grad_steps: 0,
            gamma,
            config,
        })
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn into_online(self) -> Mlp {
        self.online
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    /// Epsilon-greedy over the online network's value estimates.
    pub fn act(&self, features: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
        epsilon_greedy(&self.online.forward(features), epsilon, rng)
    }

    /// Stores the transition (reward scaled into unit range) and, once the
    /// buffer covers a batch, takes one gradient step on Bellman targets.
    /// Returns the step's loss, or `None` while the buffer is filling.
    pub fn observe(
        &mut self,
        transition: Transition,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<f64>, AgentError> {
        let scaled = Transition {
            r: transition.r * self.config.reward_scale,
            ..transition
        };
        self.buffer.push(scaled);
        let Some(batch) = self.buffer.sample(self.config.batch_size, rng) else {
            return Ok(None);
        };
        let targets = bellman_targets(&batch, &self.target, self.gamma);
        let loss = self.online.sgd_step(&batch, &targets, self.config.lr);
        self.grad_steps += 1;
        if !loss.is_finite() || loss > self.config.loss_ceiling {
            return Err(AgentError::Diverged {
                gradient_step: self.grad_steps,
                loss,
            });
        }
        if self.grad_steps % self.config.target_sync == 0 {
            self.target = self.online.clone();
        }
        Ok(Some(loss))
    }
}

/// Deep Q-learning in its learning phase, resumed from a trained network at
/// the end-of-schedule exploration rate.
#[derive(Debug)]
pub struct DqlPolicy {
    agent: DqlAgent,
    epsilon: f64,
}

impl DqlPolicy {
    pub fn resume(
        net: Mlp,
        params: &LearningParams,
        config: DqlConfig,
    ) -> Result<DqlPolicy, AgentError> {
        Ok(DqlPolicy {
            agent: DqlAgent::resume(net, params.gamma, config)?,
            epsilon: params.epsilon_end,
        })
    }
}

impl Policy for DqlPolicy {
    fn act(&mut self, env: &AttackEnv, state: &EnvState, rng: &mut ChaCha8Rng) -> usize {
        self.agent.act(&encode_features(env, state), self.epsilon, rng)
    }

    fn learn(
        &mut self,
        env: &AttackEnv,
        t: &StepTransition,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), AgentError> {
        let transition = Transition {
            s: encode_features(env, &t.prev),
            a: t.action,
            r: t.reward,
            s_next: encode_features(env, &t.next),
            done: t.done,
        };
        self.agent.observe(transition, rng)?;
        Ok(())
    }

    fn mode(&self) -> Mode {
        Mode::Learning
    }

    fn name(&self) -> &'static str {
        "dql"
    }
}

/// Greedy rollout of a trained network; read-only.
#[derive(Debug)]
pub struct ExploitDqlPolicy {
    net: Mlp,
}

impl ExploitDqlPolicy {
    pub fn new(net: Mlp) -> ExploitDqlPolicy {
        ExploitDqlPolicy { net }
    }
}

impl Policy for ExploitDqlPolicy {
    fn act(&mut self, env: &AttackEnv, state: &EnvState, _rng: &mut ChaCha8Rng) -> usize {
        argmax(&self.net.forward(&encode_features(env, state)))
    }

    fn mode(&self) -> Mode {
        Mode::Exploiting
    }

    fn name(&self) -> &'static str {
        "exploit-dql"
    }
}

/// Replays a fixed action sequence (the brute-force oracle path, typically).
/// Past the end it repeats the last action, which only matters if the budget
/// outlives the script.
#[derive(Debug)]
pub struct ScriptedPolicy {
    actions: Vec<usize>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(actions: Vec<usize>) -> ScriptedPolicy {
        ScriptedPolicy { actions, cursor: 0 }
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, _env: &AttackEnv, _state: &EnvState, _rng: &mut ChaCha8Rng) -> usize {
        let action = self
            .actions
            .get(self.cursor)
            .or(self.actions.last())
            .copied()
            .unwrap_or(0);
        self.cursor += 1;
        action
    }

    fn mode(&self) -> Mode {
        Mode::Exploiting
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// The selectable policies, exactly as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    Random,
    CredLookup,
    Q,
    ExploitQ,
    Dql,
    ExploitDql,
    Oracle,
}

impl AlgorithmKind {
    /// The six benchmark policies; the oracle is a reference, not a
    /// contestant.
    pub const ALL_BENCH: [AlgorithmKind; 6] = [
        AlgorithmKind::Random,
        AlgorithmKind::CredLookup,
        AlgorithmKind::Q,
        AlgorithmKind::ExploitQ,
        AlgorithmKind::Dql,
        AlgorithmKind::ExploitDql,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Random => "random",
            AlgorithmKind::CredLookup => "cred-lookup",
            AlgorithmKind::Q => "q",
            AlgorithmKind::ExploitQ => "exploit-q",
            AlgorithmKind::Dql => "dql",
            AlgorithmKind::ExploitDql => "exploit-dql",
            AlgorithmKind::Oracle => "oracle",
        }
    }

    /// Whether this policy needs a trained Q-table artifact.
    pub fn needs_qtable(self) -> bool {
        matches!(self, AlgorithmKind::Q | AlgorithmKind::ExploitQ)
    }

    /// Whether this policy needs a trained network artifact.
    pub fn needs_network(self) -> bool {
        matches!(self, AlgorithmKind::Dql | AlgorithmKind::ExploitDql)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(AlgorithmKind::Random),
            "cred-lookup" => Ok(AlgorithmKind::CredLookup),
            "q" => Ok(AlgorithmKind::Q),
            "exploit-q" => Ok(AlgorithmKind::ExploitQ),
            "dql" => Ok(AlgorithmKind::Dql),
            "exploit-dql" => Ok(AlgorithmKind::ExploitDql),
            "oracle" => Ok(AlgorithmKind::Oracle),
            other => Err(format!(
                "unknown algorithm {other:?}; expected one of random, cred-lookup, q, \
                 exploit-q, dql, exploit-dql, oracle"
            )),
        }
    }
}

/// Trains a tabular Q-learner: `episodes` seeded episodes of epsilon-greedy
/// interaction with temporal-difference updates. Returns the table plus the
/// per-episode cumulative reward curve.
pub fn train_tabular(
    scenario: &Scenario,
    params: &LearningParams,
    seed: u64,
) -> Result<(QTable, Vec<f64>), AgentError> {
    params.validate()?;
    let env = AttackEnv::new(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QTable::new(env.action_count());
    let mut curve = Vec::with_capacity(params.episodes as usize);
    for episode in 0..params.episodes {
        let epsilon = params.epsilon_at(episode);
        let mut state = env.reset(seed);
        while !state.terminal && state.step_count < params.step_budget && env.action_count() > 0 {
            let key = StateKey::from_state(&env, &state);
            let action = epsilon_greedy(&q.values(key), epsilon, &mut rng);
            let (next, result) = env.step_index(&state, action)?;
            let next_key = StateKey::from_state(&env, &next);
            q_update(
                &mut q,
                key,
                action,
                result.reward,
                next_key,
                next.terminal,
                params.alpha,
                params.gamma,
            );
            state = next;
        }
        curve.push(state.cumulative_reward);
    }
    Ok((q, curve))
}

/// Trains a deep Q-learner: epsilon-greedy interaction, every transition
/// pushed to the replay buffer, one minibatch regression per environment step
/// once the buffer covers a batch, target network refreshed on the configured
/// cadence. Returns the online network plus the per-episode reward curve.
pub fn train_dql(
    scenario: &Scenario,
    params: &LearningParams,
    config: &DqlConfig,
    seed: u64,
) -> Result<(Mlp, Vec<f64>), AgentError> {
    params.validate()?;
    let env = AttackEnv::new(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = DqlAgent::new(
        env.key_width(),
        env.action_count(),
        params.gamma,
        config.clone(),
        &mut rng,
    )?;
    let mut curve = Vec::with_capacity(params.episodes as usize);
    for episode in 0..params.episodes {
        let epsilon = params.epsilon_at(episode);
        let mut state = env.reset(seed);
        while !state.terminal && state.step_count < params.step_budget && env.action_count() > 0 {
            let features = encode_features(&env, &state);
            let action = agent.act(&features, epsilon, &mut rng);
            let (next, result) = env.step_index(&state, action)?;
            agent.observe(
                Transition {
                    s: features,
                    a: action,
                    r: result.reward,
                    s_next: encode_features(&env, &next),
                    done: next.terminal,
                },
                &mut rng,
            )?;
            state = next;
        }
        curve.push(state.cumulative_reward);
    }
    Ok((agent.into_online(), curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::OPTIMAL;
    use crate::scenario::baseline_nuit;

    fn baseline_env() -> AttackEnv {
        AttackEnv::new(&baseline_nuit()).unwrap()
    }

    /// Greedy rollout helper: follows argmax of the table until terminal or
    /// the budget runs out; returns the end state.
    fn greedy_rollout_q(env: &AttackEnv, q: &QTable, budget: u32) -> EnvState {
        let mut state = env.reset(0);
        while !state.terminal && state.step_count < budget {
            let action = exploit_policy(q, StateKey::from_state(env, &state));
            state = env.step_index(&state, action).unwrap().0;
        }
        state
    }

    fn greedy_rollout_net(env: &AttackEnv, net: &Mlp, budget: u32) -> EnvState {
        let mut state = env.reset(0);
        while !state.terminal && state.step_count < budget {
            let action = argmax(&net.forward(&encode_features(env, &state)));
            state = env.step_index(&state, action).unwrap().0;
        }
        state
    }

    #[test]
    fn state_key_concatenates_bitmaps_in_order() {
        let env = baseline_env();
        let state = env.reset(0);
        // Entry node owned and discovered: bit 0 of the owned field plus bit
        // 0 of the discovered field, which starts at offset 5.
        assert_eq!(StateKey::from_state(&env, &state).0, 1 | (1 << 5));

        let (after, _) = env.step_index(&state, 0).unwrap();
        let widths = env.bit_widths();
        let expected = (after.owned as u128)
            | (after.discovered as u128) << widths[0]
            | (after.credentials as u128) << (widths[0] + widths[1])
            | (after.executed as u128) << (widths[0] + widths[1] + widths[2])
            | (after.collected as u128) << (widths[0] + widths[1] + widths[2] + widths[3]);
        assert_eq!(StateKey::from_state(&env, &after).0, expected);
    }

    #[test]
    fn unseen_states_read_all_zero() {
        let q = QTable::new(4);
        assert_eq!(q.values(StateKey(123)), vec![0.0; 4]);
        assert_eq!(q.best_value(StateKey(123)), 0.0);
        assert!(q.is_empty());
    }

    #[test]
    fn qtable_artifact_round_trips() {
        let mut q = QTable::new(3);
        q.row_mut(StateKey(9))[1] = 2.5;
        q.row_mut(StateKey(42))[0] = -1.0;
        let restored = QTable::from_json(&q.to_json()).unwrap();
        assert_eq!(q, restored);
    }

    #[test]
    fn qtable_artifact_is_stable_text() {
        let mut q = QTable::new(2);
        for key in [99u128, 7, 12] {
            q.row_mut(StateKey(key))[0] = key as f64;
        }
        assert_eq!(q.to_json(), q.to_json());
        assert!(q.to_json().contains("\"action_count\":2"));
    }

    #[test]
    fn qtable_rejects_ragged_rows() {
        let err = QTable::from_json(r#"{"action_count":3,"entries":{"5":[1.0]}}"#).unwrap_err();
        assert!(err.to_string().contains("3"), "unexpected message: {err}");
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let params = LearningParams::default();
        assert_eq!(params.epsilon_at(0), 0.9);
        assert!((params.epsilon_at(200) - 0.5).abs() < 1e-12);
        assert_eq!(params.epsilon_at(400), 0.1);
        assert_eq!(params.epsilon_at(499), 0.1);
    }

    #[test]
    fn params_validation_catches_bad_ranges() {
        let mut params = LearningParams::default();
        params.alpha = 0.0;
        assert!(params.validate().is_err());
        params = LearningParams::default();
        params.gamma = 1.0;
        assert!(params.validate().is_err());
        params = LearningParams::default();
        params.epsilon_end = 0.95; // above start
        assert!(params.validate().is_err());
        assert!(LearningParams::default().validate().is_ok());
    }

    #[test]
    fn random_policy_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 10_000;
        let mut counts = [0usize; 11];
        for _ in 0..draws {
            counts[random_policy(11, &mut rng)] += 1;
        }
        let p = 1.0 / 11.0;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &count) in counts.iter().enumerate() {
            assert!(
                (count as f64 - expected).abs() <= 5.0 * sigma,
                "index {i} drawn {count} times, expected about {expected}"
            );
        }
    }

    #[test]
    fn random_policy_single_action_returns_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(random_policy(1, &mut rng), 0);
        }
    }

    #[test]
    fn epsilon_zero_is_pure_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        assert_eq!(epsilon_greedy(&[2.0, 2.0, 1.0], 0.0, &mut rng), 0);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[epsilon_greedy(&[9.0, 0.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        let p = 0.25;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &count) in counts.iter().enumerate() {
            assert!(
                (count as f64 - expected).abs() <= 5.0 * sigma,
                "index {i} drawn {count} times, expected about {expected}"
            );
        }
    }

    #[test]
    fn q_update_fixed_point_and_substitution() {
        let mut q = QTable::new(2);
        // All-zero table, zero reward: zero is a fixed point.
        q_update(&mut q, StateKey(0), 0, 0.0, StateKey(1), false, 0.5, 0.9);
        assert_eq!(q.values(StateKey(0)), vec![0.0, 0.0]);
        // Direct substitution: terminal transition, alpha 0.5, r 10 -> 5.
        q_update(&mut q, StateKey(0), 1, 10.0, StateKey(1), true, 0.5, 0.9);
        assert_eq!(q.values(StateKey(0))[1], 5.0);
    }

    #[test]
    fn q_update_touches_one_entry() {
        let mut q = QTable::new(3);
        q.row_mut(StateKey(7))[2] = 4.0;
        q_update(&mut q, StateKey(7), 0, 1.0, StateKey(8), true, 0.1, 0.9);
        assert_eq!(q.values(StateKey(7))[1], 0.0);
        assert_eq!(q.values(StateKey(7))[2], 4.0);
        assert_eq!(q.len(), 1, "no row for the unvisited next state");
    }

    #[test]
    fn q_update_converges_to_discounted_chain_values() {
        // Two states, one action: s0 -> s1 -> terminal with reward R on the
        // final transition. Fixed point: Q(s1) = R, Q(s0) = gamma * R.
        let (gamma, r) = (0.9, 10.0);
        let mut q = QTable::new(1);
        for _ in 0..2_000 {
            q_update(&mut q, StateKey(0), 0, 0.0, StateKey(1), false, 0.1, gamma);
            q_update(&mut q, StateKey(1), 0, r, StateKey(2), true, 0.1, gamma);
        }
        assert!((q.values(StateKey(1))[0] - r).abs() <= 1e-6);
        assert!((q.values(StateKey(0))[0] - gamma * r).abs() <= 1e-6);
    }

    #[test]
    fn exploit_policy_default_and_scale_invariance() {
        let mut q = QTable::new(3);
        assert_eq!(exploit_policy(&q, StateKey(5)), 0, "all-zero row ties to 0");
        let row = q.row_mut(StateKey(5));
        row[1] = 3.0;
        row[2] = 1.0;
        assert_eq!(exploit_policy(&q, StateKey(5)), 1);
        for v in q.row_mut(StateKey(5)).iter_mut() {
            *v *= 2.0;
        }
        assert_eq!(exploit_policy(&q, StateKey(5)), 1);
    }

    #[test]
    fn cred_lookup_never_connects_without_credentials() {
        let env = baseline_env();
        let state = env.reset(0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let action = credential_lookup_policy(&env, &state, &mut rng);
            assert!(env.connect_indices(action).is_none(), "chose a connect with no creds");
        }
    }

    #[test]
    fn cred_lookup_takes_the_single_eligible_connect() {
        let env = baseline_env();
        // Leak email_creds via the skill vulnerability; the only eligible
        // connect is then email_account over HTTPS.
        let (state, _) = env.step_index(&env.reset(0), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            assert_eq!(credential_lookup_policy(&env, &state, &mut rng), 7);
        }
    }

    #[test]
    fn cred_lookup_conquers_the_baseline_eventually() {
        let env = baseline_env();
        let full: u32 = env.node_count() as u32;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = env.reset(seed);
            while !state.terminal && state.step_count < 10_000 {
                let action = credential_lookup_policy(&env, &state, &mut rng);
                state = env.step_index(&state, action).unwrap().0;
            }
            let metrics = env.conquest_metrics(&state);
            assert!(
                metrics.all_owned,
                "seed {seed}: owned only {} of {full} nodes",
                metrics.nodes_owned
            );
        }
    }

    #[test]
    fn scripted_policy_replays_and_clamps() {
        let env = baseline_env();
        let mut policy = ScriptedPolicy::new(vec![3, 1]);
        let state = env.reset(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(policy.act(&env, &state, &mut rng), 3);
        assert_eq!(policy.act(&env, &state, &mut rng), 1);
        assert_eq!(policy.act(&env, &state, &mut rng), 1, "clamps to the last action");
    }

    #[test]
    fn algorithm_names_round_trip() {
        for kind in AlgorithmKind::ALL_BENCH
            .into_iter()
            .chain([AlgorithmKind::Oracle])
        {
            assert_eq!(kind.name().parse::<AlgorithmKind>().unwrap(), kind);
        }
        assert!("sarsa".parse::<AlgorithmKind>().is_err());
    }

    #[test]
    fn tabular_training_is_deterministic() {
        let scenario = baseline_nuit();
        let params = LearningParams {
            episodes: 40,
            ..LearningParams::default()
        };
        let (qa, curve_a) = train_tabular(&scenario, &params, 7).unwrap();
        let (qb, curve_b) = train_tabular(&scenario, &params, 7).unwrap();
        assert_eq!(qa, qb);
        assert_eq!(curve_a, curve_b);
        assert_eq!(curve_a.len(), 40);
    }

    #[test]
    fn tabular_training_with_zero_episodes_is_empty() {
        let params = LearningParams {
            episodes: 0,
            ..LearningParams::default()
        };
        let (q, curve) = train_tabular(&baseline_nuit(), &params, 0).unwrap();
        assert!(q.is_empty());
        assert!(curve.is_empty());
    }

    #[test]
    fn trained_table_conquers_the_baseline_greedily() {
        let scenario = baseline_nuit();
        let (q, _) = train_tabular(&scenario, &LearningParams::default(), 0).unwrap();
        let env = baseline_env();
        let end = greedy_rollout_q(&env, &q, 200);
        let metrics = env.conquest_metrics(&end);
        assert!(metrics.all_owned);
        // The default schedule reliably conquers but may keep one wasted move:
        // the zero-reward email data collection commutes with the device lookup,
        // so both orderings share a value fixed point and the strictly shorter
        // skip-it-entirely branch is rarely visited once the greedy policy locks
        // in. Exact minimality needs a longer schedule (next test).
        assert!(
            metrics.steps <= OPTIMAL.len() as u32 + 1,
            "greedy path took {} steps",
            metrics.steps
        );
    }

    #[test]
    fn converged_table_recovers_the_minimal_conquest() {
        let scenario = baseline_nuit();
        let params = LearningParams {
            episodes: 20_000,
            epsilon_decay_episodes: 16_000,
            ..LearningParams::default()
        };
        let (q, _) = train_tabular(&scenario, &params, 0).unwrap();
        let env = baseline_env();
        let end = greedy_rollout_q(&env, &q, 200);
        let metrics = env.conquest_metrics(&end);
        assert!(metrics.all_owned);
        assert_eq!(metrics.steps, OPTIMAL.len() as u32, "greedy path is minimal");
    }

    #[test]
    fn dql_training_is_deterministic_and_conquers() {
        let scenario = baseline_nuit();
        let params = LearningParams::default();
        let config = DqlConfig::default();
        let (net, curve) = train_dql(&scenario, &params, &config, 0).unwrap();
        let (_, curve_again) = train_dql(&scenario, &params, &config, 0).unwrap();
        assert_eq!(curve, curve_again, "same seed, same learning curve");

        let env = baseline_env();
        let end = greedy_rollout_net(&env, &net, 200);
        let metrics = env.conquest_metrics(&end);
        assert!(metrics.all_owned, "greedy rollout stalled at {} nodes", metrics.nodes_owned);
        assert!(
            metrics.steps <= OPTIMAL.len() as u32 + 2,
            "took {} steps against an oracle length of {}",
            metrics.steps,
            OPTIMAL.len()
        );
    }

    #[test]
    fn dql_takes_no_gradient_steps_until_buffer_covers_a_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let config = DqlConfig {
            batch_size: 4,
            buffer_capacity: 8,
            ..DqlConfig::default()
        };
        let mut agent = DqlAgent::new(3, 2, 0.95, config, &mut rng).unwrap();
        for i in 0..3 {
            let loss = agent
                .observe(
                    Transition {
                        s: vec![0.0, 1.0, 0.0],
                        a: i % 2,
                        r: 1.0,
                        s_next: vec![1.0, 0.0, 0.0],
                        done: false,
                    },
                    &mut rng,
                )
                .unwrap();
            assert!(loss.is_none(), "trained on an underfilled buffer");
        }
        assert_eq!(agent.grad_steps(), 0);
    }

    #[test]
    fn dql_target_changes_only_at_sync_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let config = DqlConfig {
            hidden: vec![8],
            batch_size: 2,
            buffer_capacity: 16,
            target_sync: 3,
            ..DqlConfig::default()
        };
        let mut agent = DqlAgent::new(2, 2, 0.9, config, &mut rng).unwrap();
        for step in 0..12u64 {
            let before = agent.target().clone();
            agent
                .observe(
                    Transition {
                        s: vec![step as f64 % 2.0, 1.0],
                        a: (step % 2) as usize,
                        r: 1.0,
                        s_next: vec![1.0, 0.0],
                        done: step % 3 == 0,
                    },
                    &mut rng,
                )
                .unwrap();
            if agent.grad_steps() == 0 || agent.grad_steps() % 3 != 0 {
                assert_eq!(agent.target(), &before, "target moved off-schedule");
            } else {
                assert_eq!(agent.target(), agent.online(), "target missed its sync");
            }
        }
    }

    #[test]
    fn dql_divergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let config = DqlConfig {
            hidden: vec![4],
            batch_size: 2,
            buffer_capacity: 4,
            // An absurd learning rate forces the quadratic loss to explode.
            lr: 1e12,
            loss_ceiling: 1e6,
            ..DqlConfig::default()
        };
        let mut agent = DqlAgent::new(2, 2, 0.9, config, &mut rng).unwrap();
        let mut diverged = false;
        for step in 0..50 {
            let result = agent.observe(
                Transition {
                    s: vec![1.0, 0.5],
                    a: step % 2,
                    r: 100.0,
                    s_next: vec![0.5, 1.0],
                    done: false,
                },
                &mut rng,
            );
            if let Err(AgentError::Diverged { loss, .. }) = result {
                assert!(!loss.is_finite() || loss > 1e6);
                diverged = true;
                break;
            }
        }
        assert!(diverged, "runaway learning rate never tripped the guard");
    }
}
