//! The measurement half of the simulator: seeded single episodes, the
//! brute-force optimal-path oracle, and multi-seed benchmarks that compare
//! all six policies on speed of conquest (steps to full ownership) and depth
//! of conquest (nodes owned at fixed checkpoints).
//!
//! Everything here is deterministic under its inputs: episodes derive their
//! randomness from the seed alone, and benchmark aggregation is independent
//! of worker scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::agent::{
    train_dql, train_tabular, AgentError, AlgorithmKind, CredentialLookupPolicy, DqlPolicy,
    ExploitDqlPolicy, ExploitQPolicy, LearningParams, Policy, RandomPolicy, ScriptedPolicy,
    StateKey, StepTransition, TabularQPolicy,
};
use crate::env::{AttackEnv, EnvError, EnvState};
use crate::nn::DqlConfig;
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("invalid benchmark configuration: {0}")]
    Invalid(String),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// A minimal-length action sequence reaching full ownership, with ties broken
/// by higher final reward and then lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalPath {
    pub actions: Vec<usize>,
    pub length: usize,
    pub final_reward: f64,
}

/// Breadth-first search for the shortest full-ownership sequence, exploring
/// at most `max_depth` actions deep. Returns `None` when no sequence within
/// the depth bound conquers every node.
pub fn brute_force_optimal(
    scenario: &Scenario,
    max_depth: usize,
) -> Result<Option<OptimalPath>, EnvError> {
    let env = AttackEnv::new(scenario)?;
    Ok(brute_force_optimal_env(&env, max_depth))
}

/// [`brute_force_optimal`] on an already-compiled environment.
///
/// States are deduplicated on the packed progress bitmaps: the dynamics
/// depend on nothing else, and rewards are additive, so of two equal-length
/// paths into one state only the richer (then lexicographically smaller) can
/// appear in an optimal continuation. Later, longer revisits can never beat
/// an earlier arrival on length and are dropped entirely.
pub fn brute_force_optimal_env(env: &AttackEnv, max_depth: usize) -> Option<OptimalPath> {
    let start = env.reset(0);
    if env.conquest_metrics(&start).all_owned {
        return Some(OptimalPath {
            actions: Vec::new(),
            length: 0,
            final_reward: 0.0,
        });
    }

    let mut seen: HashSet<u128> = HashSet::new();
    seen.insert(StateKey::from_state(env, &start).0);
    let mut level: Vec<(EnvState, Vec<usize>)> = vec![(start, Vec::new())];

    for depth in 1..=max_depth {
        let mut next_level: HashMap<u128, (EnvState, Vec<usize>)> = HashMap::new();
        let mut goal: Option<(f64, Vec<usize>)> = None;

        for (state, seq) in &level {
            for action in 0..env.action_count() {
                let (next, _) = env
                    .step_index(state, action)
                    .expect("enumerated action indices are always in range");
                let key = StateKey::from_state(env, &next).0;
                if seen.contains(&key) {
                    continue;
                }
                let mut path = seq.clone();
                path.push(action);

                if env.conquest_metrics(&next).all_owned {
                    let candidate = (next.cumulative_reward, path);
                    let better = match &goal {
                        None => true,
                        Some((reward, seq)) => candidate.0 > *reward
                            || (candidate.0 == *reward && candidate.1 < *seq),
                    };
                    if better {
                        goal = Some(candidate);
                    }
                    continue;
                }
                if next.terminal {
                    // Terminal without full ownership is a dead end (a
                    // mission-complete vulnerability fired early).
                    continue;
                }
                match next_level.entry(key) {
                    std::collections::hash_map::Entry::Vacant(slot) => {
                        slot.insert((next, path));
                    }
                    std::collections::hash_map::Entry::Occupied(mut slot) => {
                        let (held, held_path) = slot.get();
                        if next.cumulative_reward > held.cumulative_reward
                            || (next.cumulative_reward == held.cumulative_reward
                                && path < *held_path)
                        {
                            slot.insert((next, path));
                        }
                    }
                }
            }
        }

        if let Some((final_reward, actions)) = goal {
            debug_assert_eq!(actions.len(), depth);
            return Some(OptimalPath {
                length: actions.len(),
                actions,
                final_reward,
            });
        }
        if next_level.is_empty() {
            return None;
        }
        seen.extend(next_level.keys().copied());
        level = next_level.into_values().collect();
    }
    None
}

/// Independent cross-check for the breadth-first oracle: iterative-deepening
/// depth-first search sharing no data structures with it. Returns the minimal
/// length and the best final reward at that length.
///
/// Branches that change no progress bitmap are pruned: such a step pays its
/// cost and contributes nothing, so it can never appear in an optimal
/// minimal-length sequence.
pub fn dfs_optimal(env: &AttackEnv, max_depth: usize) -> Option<(usize, f64)> {
    fn explore(env: &AttackEnv, state: &EnvState, depth_left: usize, best: &mut Option<f64>) {
        if env.conquest_metrics(state).all_owned {
            if best.map_or(true, |b| state.cumulative_reward > b) {
                *best = Some(state.cumulative_reward);
            }
            return;
        }
        if depth_left == 0 || state.terminal {
            return;
        }
        for action in 0..env.action_count() {
            let (next, _) = env
                .step_index(state, action)
                .expect("enumerated action indices are always in range");
            let progressed = next.owned != state.owned
                || next.discovered != state.discovered
                || next.credentials != state.credentials
                || next.executed != state.executed
                || next.collected != state.collected;
            if progressed {
                explore(env, &next, depth_left - 1, best);
            }
        }
    }

    let start = env.reset(0);
    for depth in 0..=max_depth {
        let mut best = None;
        explore(env, &start, depth, &mut best);
        if let Some(reward) = best {
            return Some((depth, reward));
        }
    }
    None
}

/// One CSV row: a single action within an episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub step: u32,
    pub action_id: String,
    pub succeeded: bool,
    pub reward: f64,
    pub cumulative_reward: f64,
    pub nodes_owned: u32,
}

/// Every step of one seeded episode, plus the speed-of-conquest headline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub algorithm: String,
    pub seed: u64,
    pub episode: u32,
    pub rows: Vec<StepRow>,
    /// First step at which every node was owned; `None` if never.
    pub steps_to_full_ownership: Option<u32>,
}

impl EpisodeRecord {
    pub fn final_reward(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_reward)
    }

    /// Cumulative reward at a checkpoint: the last row at or before `step`
    /// (episodes that ended early hold their final value).
    pub fn reward_at(&self, step: u32) -> f64 {
        self.rows
            .iter()
            .rev()
            .find(|r| r.step <= step)
            .map_or(0.0, |r| r.cumulative_reward)
    }

    /// Nodes owned at a checkpoint; before any step only the entry node is.
    pub fn owned_at(&self, step: u32) -> u32 {
        self.rows
            .iter()
            .rev()
            .find(|r| r.step <= step)
            .map_or(1, |r| r.nodes_owned)
    }
}

/// Runs one seeded episode: act, step, learn, until the environment reports
/// terminal or the budget runs out. All randomness comes from `seed`.
pub fn run_episode(
    env: &AttackEnv,
    policy: &mut dyn Policy,
    step_budget: u32,
    seed: u64,
    episode: u32,
) -> Result<EpisodeRecord, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(seed);
    let mut rows = Vec::new();
    let mut steps_to_full = env.conquest_metrics(&state).all_owned.then_some(0);

    while !state.terminal && state.step_count < step_budget && env.action_count() > 0 {
        let action = policy.act(env, &state, &mut rng);
        let (next, result) = env.step_index(&state, action)?;
        rows.push(StepRow {
            step: next.step_count,
            action_id: env
                .action(action)
                .expect("policies return enumerated indices")
                .to_string(),
            succeeded: result.succeeded,
            reward: result.reward,
            cumulative_reward: next.cumulative_reward,
            nodes_owned: env.conquest_metrics(&next).nodes_owned,
        });
        policy.learn(
            env,
            &StepTransition {
                prev: state,
                action,
                reward: result.reward,
                next,
                done: next.terminal,
            },
            &mut rng,
        )?;
        if steps_to_full.is_none() && env.conquest_metrics(&next).all_owned {
            steps_to_full = Some(next.step_count);
        }
        state = next;
    }

    Ok(EpisodeRecord {
        algorithm: policy.name().to_string(),
        seed,
        episode,
        rows,
        steps_to_full_ownership: steps_to_full,
    })
}

/// Benchmark shape: evaluation budget, reporting checkpoints, training
/// parameters for the learners, and worker-thread count.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub step_budget: u32,
    pub checkpoints: Vec<u32>,
    pub params: LearningParams,
    pub dql: DqlConfig,
    /// Worker threads over seeds; 0 means available parallelism.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            step_budget: 200,
            checkpoints: vec![10, 50, 100, 200],
            params: LearningParams::default(),
            dql: DqlConfig::default(),
            threads: 0,
        }
    }
}

/// Per-algorithm aggregates over all benchmark seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmStats {
    pub algorithm: String,
    pub seeds: usize,
    pub reached_full_ownership: usize,
    /// Episodes that never reached full ownership count as the full budget.
    pub mean_steps: f64,
    pub min_steps: u32,
    pub max_steps: u32,
    /// Mean cumulative reward at each checkpoint, in checkpoint order.
    pub mean_reward_at: Vec<f64>,
    /// Mean nodes owned at each checkpoint — the depth-of-conquest curve.
    pub mean_owned_at: Vec<f64>,
}

/// Full benchmark output: aggregates plus every raw episode, so the
/// aggregates can always be recomputed from the data they summarize.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub scenario: String,
    pub step_budget: u32,
    pub checkpoints: Vec<u32>,
    pub seeds: Vec<u64>,
    pub stats: Vec<AlgorithmStats>,
    pub records: Vec<EpisodeRecord>,
}

impl BenchmarkReport {
    pub fn to_json_pretty(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serialization");
        text.push('\n');
        text
    }
}

/// Groups records by algorithm (first-appearance order) and aggregates.
/// Shared by [`run_benchmark`] and by consumers re-deriving statistics from
/// raw CSV rows.
pub fn recompute_stats(
    records: &[EpisodeRecord],
    checkpoints: &[u32],
    step_budget: u32,
) -> Vec<AlgorithmStats> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&EpisodeRecord>> = HashMap::new();
    for record in records {
        let name = record.algorithm.as_str();
        if !groups.contains_key(name) {
            order.push(name);
        }
        groups.entry(name).or_default().push(record);
    }

    order
        .into_iter()
        .map(|name| {
            let group = &groups[name];
            let steps: Vec<u32> = group
                .iter()
                .map(|r| r.steps_to_full_ownership.unwrap_or(step_budget))
                .collect();
            let n = group.len() as f64;
            AlgorithmStats {
                algorithm: name.to_string(),
                seeds: group.len(),
                reached_full_ownership: group
                    .iter()
                    .filter(|r| r.steps_to_full_ownership.is_some())
                    .count(),
                mean_steps: steps.iter().map(|&s| s as f64).sum::<f64>() / n,
                min_steps: steps.iter().copied().min().unwrap_or(0),
                max_steps: steps.iter().copied().max().unwrap_or(0),
                mean_reward_at: checkpoints
                    .iter()
                    .map(|&c| group.iter().map(|r| r.reward_at(c)).sum::<f64>() / n)
                    .collect(),
                mean_owned_at: checkpoints
                    .iter()
                    .map(|&c| group.iter().map(|r| r.owned_at(c) as f64).sum::<f64>() / n)
                    .collect(),
            }
        })
        .collect()
}

fn evaluate_seed(
    scenario: &Scenario,
    env: &AttackEnv,
    algorithms: &[AlgorithmKind],
    config: &BenchConfig,
    oracle_actions: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<EpisodeRecord>, BenchError> {
    // Train each learner once per seed; learning and exploiting variants
    // share the artifact.
    let trained_q = if algorithms.iter().any(|a| a.needs_qtable()) {
        Some(train_tabular(scenario, &config.params, seed)?.0)
    } else {
        None
    };
    let trained_net = if algorithms.iter().any(|a| a.needs_network()) {
        Some(train_dql(scenario, &config.params, &config.dql, seed)?.0)
    } else {
        None
    };

    let mut records = Vec::with_capacity(algorithms.len());
    for &algorithm in algorithms {
        let mut policy: Box<dyn Policy> = match algorithm {
            AlgorithmKind::Random => Box::new(RandomPolicy),
            AlgorithmKind::CredLookup => Box::new(CredentialLookupPolicy),
            AlgorithmKind::Q => Box::new(TabularQPolicy::resume(
                trained_q.clone().expect("trained above"),
                &config.params,
            )),
            AlgorithmKind::ExploitQ => Box::new(ExploitQPolicy::new(
                trained_q.clone().expect("trained above"),
            )),
            AlgorithmKind::Dql => Box::new(DqlPolicy::resume(
                trained_net.clone().expect("trained above"),
                &config.params,
                config.dql.clone(),
            )?),
            AlgorithmKind::ExploitDql => Box::new(ExploitDqlPolicy::new(
                trained_net.clone().expect("trained above"),
            )),
            AlgorithmKind::Oracle => Box::new(ScriptedPolicy::new(
                oracle_actions.expect("checked before dispatch").to_vec(),
            )),
        };
        records.push(run_episode(env, policy.as_mut(), config.step_budget, seed, 0)?);
    }
    Ok(records)
}

/// Runs the full comparison: trains learners once per seed, evaluates every
/// requested algorithm on one budgeted episode per seed, and aggregates.
///
/// Learning-phase policies resume their trained artifact with the
/// end-of-schedule exploration rate (they keep learning as they run);
/// exploiting variants follow the artifact greedily. Seeds fan out across
/// worker threads; results are assembled in (algorithm, seed) order, so the
/// report is identical whatever the thread count.
pub fn run_benchmark(
    scenario: &Scenario,
    algorithms: &[AlgorithmKind],
    seeds: &[u64],
    config: &BenchConfig,
) -> Result<BenchmarkReport, BenchError> {
    if algorithms.is_empty() {
        return Err(BenchError::Invalid("at least one algorithm is required".into()));
    }
    if seeds.is_empty() {
        return Err(BenchError::Invalid("at least one seed is required".into()));
    }
    config.params.validate()?;
    config.dql.validate().map_err(AgentError::from)?;

    let env = AttackEnv::new(scenario)?;
    let oracle_actions = if algorithms.contains(&AlgorithmKind::Oracle) {
        match brute_force_optimal_env(&env, env.key_width().max(1)) {
            Some(path) => Some(path.actions),
            None => {
                return Err(BenchError::Invalid(
                    "the oracle policy needs a winnable scenario".into(),
                ))
            }
        }
    } else {
        None
    };

    let threads = if config.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        config.threads
    };
    let threads = threads.clamp(1, seeds.len());

    // Seeds are strided across workers; every output lands in its own slot,
    // so assembly order is independent of scheduling.
    let mut per_seed: Vec<Option<Result<Vec<EpisodeRecord>, BenchError>>> =
        (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(threads);
        for worker in 0..threads {
            let env = &env;
            let oracle = oracle_actions.as_deref();
            handles.push(scope.spawn(move || {
                let mut outputs = Vec::new();
                let mut index = worker;
                while index < seeds.len() {
                    let result =
                        evaluate_seed(scenario, env, algorithms, config, oracle, seeds[index]);
                    outputs.push((index, result));
                    index += threads;
                }
                outputs
            }));
        }
        for handle in handles {
            for (index, result) in handle.join().expect("benchmark worker panicked") {
                per_seed[index] = Some(result);
            }
        }
    });

    let mut by_seed = Vec::with_capacity(seeds.len());
    for slot in per_seed {
        by_seed.push(slot.expect("every seed is assigned to a worker")?);
    }

    let mut records = Vec::with_capacity(algorithms.len() * seeds.len());
    for alg_index in 0..algorithms.len() {
        for seed_records in &by_seed {
            records.push(seed_records[alg_index].clone());
        }
    }

    let stats = recompute_stats(&records, &config.checkpoints, config.step_budget);
    Ok(BenchmarkReport {
        scenario: scenario.name.clone(),
        step_budget: config.step_budget,
        checkpoints: config.checkpoints.clone(),
        seeds: seeds.to_vec(),
        stats,
        records,
    })
}

const CSV_HEADER: [&str; 9] = [
    "algorithm",
    "seed",
    "episode",
    "step",
    "action_id",
    "succeeded",
    "reward",
    "cumulative_reward",
    "nodes_owned",
];

/// Writes episode records as CSV. The header row is always present, so an
/// empty record set yields a header-only file.
pub fn write_csv<W: Write>(records: &[EpisodeRecord], writer: W) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(CSV_HEADER)?;
    for record in records {
        for row in &record.rows {
            out.write_record([
                record.algorithm.as_str(),
                &record.seed.to_string(),
                &record.episode.to_string(),
                &row.step.to_string(),
                &row.action_id,
                if row.succeeded { "true" } else { "false" },
                &row.reward.to_string(),
                &row.cumulative_reward.to_string(),
                &row.nodes_owned.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// [`write_csv`] to a file path.
pub fn emit_csv(records: &[EpisodeRecord], path: &Path) -> Result<(), BenchError> {
    write_csv(records, std::fs::File::create(path)?)
}

/// Reads records back from CSV, regrouping consecutive rows that share
/// (algorithm, seed, episode) and re-deriving steps-to-full-ownership from
/// the owned-node count. Verifies the running-sum and monotonicity row
/// invariants while at it.
pub fn read_csv<R: Read>(
    reader: R,
    full_ownership_nodes: u32,
) -> Result<Vec<EpisodeRecord>, BenchError> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let header = csv_reader.headers()?;
        if header.iter().ne(CSV_HEADER) {
            return Err(BenchError::Invalid(format!(
                "unexpected CSV header: {header:?}"
            )));
        }
    }

    fn field<T: std::str::FromStr>(record: &csv::StringRecord, index: usize) -> Result<T, BenchError> {
        let raw = record
            .get(index)
            .ok_or_else(|| BenchError::Invalid(format!("row too short: {record:?}")))?;
        raw.parse().map_err(|_| {
            BenchError::Invalid(format!("bad value {raw:?} in column {}", CSV_HEADER[index]))
        })
    }

    let mut records: Vec<EpisodeRecord> = Vec::new();
    for row in csv_reader.records() {
        let row = row?;
        let algorithm: String = field(&row, 0)?;
        let seed: u64 = field(&row, 1)?;
        let episode: u32 = field(&row, 2)?;
        let step = StepRow {
            step: field(&row, 3)?,
            action_id: field(&row, 4)?,
            succeeded: field(&row, 5)?,
            reward: field(&row, 6)?,
            cumulative_reward: field(&row, 7)?,
            nodes_owned: field(&row, 8)?,
        };

        let same_episode = records.last().is_some_and(|r| {
            r.algorithm == algorithm && r.seed == seed && r.episode == episode
        });
        if !same_episode {
            records.push(EpisodeRecord {
                algorithm,
                seed,
                episode,
                rows: Vec::new(),
                steps_to_full_ownership: None,
            });
        }
        let record = records.last_mut().expect("just pushed");
        if let Some(previous) = record.rows.last() {
            if previous.cumulative_reward + step.reward != step.cumulative_reward {
                return Err(BenchError::Invalid(format!(
                    "cumulative reward breaks the running sum at step {}",
                    step.step
                )));
            }
            if step.nodes_owned < previous.nodes_owned {
                return Err(BenchError::Invalid(format!(
                    "owned-node count decreases at step {}",
                    step.step
                )));
            }
        } else if step.reward != step.cumulative_reward {
            return Err(BenchError::Invalid(format!(
                "first row of an episode must start the running sum, got {} vs {}",
                step.reward, step.cumulative_reward
            )));
        }
        if record.steps_to_full_ownership.is_none() && step.nodes_owned == full_ownership_nodes {
            record.steps_to_full_ownership = Some(step.step);
        }
        record.rows.push(step);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::OPTIMAL;
    use crate::scenario::{baseline_nuit, load_scenario};

    fn baseline_env() -> AttackEnv {
        AttackEnv::new(&baseline_nuit()).unwrap()
    }

    #[test]
    fn oracle_finds_the_nine_step_conquest() {
        let path = brute_force_optimal(&baseline_nuit(), 15).unwrap().unwrap();
        assert_eq!(path.length, 9);
        assert_eq!(path.final_reward, 7491.0);
        assert_eq!(path.actions, OPTIMAL.to_vec());
    }

    #[test]
    fn dfs_cross_check_agrees_on_the_baseline() {
        let env = baseline_env();
        let bfs = brute_force_optimal_env(&env, 15).unwrap();
        let (dfs_length, dfs_reward) = dfs_optimal(&env, 15).unwrap();
        assert_eq!(dfs_length, bfs.length);
        assert_eq!(dfs_reward, bfs.final_reward);
    }

    #[test]
    fn one_node_scenario_is_already_conquered() {
        let scenario = load_scenario(
            r#"{
                "name": "solo",
                "entry_node": "only",
                "nodes": [{
                    "id": "only", "value": 3.0,
                    "services": [], "firewall_allow": [],
                    "vulnerabilities": []
                }]
            }"#,
        )
        .unwrap();
        let path = brute_force_optimal(&scenario, 5).unwrap().unwrap();
        assert_eq!(path.length, 0);
        assert!(path.actions.is_empty());
        assert_eq!(path.final_reward, 0.0);
    }

    #[test]
    fn unwinnable_variant_reports_none() {
        let mut scenario = baseline_nuit();
        // Closing the email account's firewall severs the only route forward.
        scenario.nodes[1].firewall_allow.clear();
        assert_eq!(scenario.nodes[1].id, "email_account");
        let env = AttackEnv::new(&scenario).unwrap();
        assert!(brute_force_optimal_env(&env, 23).is_none());
        assert!(dfs_optimal(&env, 23).is_none());
    }

    #[test]
    fn bfs_tie_breaks_lexicographically() {
        // Two interchangeable credentials open the same target: both
        // two-step conquests earn the same reward, so the oracle must pick
        // the lexicographically smaller action sequence.
        let scenario = load_scenario(
            r#"{
                "name": "twin-paths",
                "entry_node": "a",
                "nodes": [
                    {
                        "id": "a", "value": 0.0,
                        "services": [], "firewall_allow": [],
                        "vulnerabilities": [
                            {"id": "leak_one", "locality": "local",
                             "outcome": {"kind": "leak_credential", "credential_id": "c1",
                                         "target_node": "b", "port": "ssh"}},
                            {"id": "leak_two", "locality": "local",
                             "outcome": {"kind": "leak_credential", "credential_id": "c2",
                                         "target_node": "b", "port": "ssh"}}
                        ]
                    },
                    {
                        "id": "b", "value": 10.0,
                        "services": ["ssh"], "firewall_allow": ["ssh"],
                        "vulnerabilities": []
                    }
                ]
            }"#,
        )
        .unwrap();
        let path = brute_force_optimal(&scenario, 6).unwrap().unwrap();
        // Actions enumerate locals first (0, 1), then connects (2, 3).
        assert_eq!(path.actions, vec![0, 2]);
        assert_eq!(path.length, 2);
        assert_eq!(path.final_reward, 8.0);

        let env = AttackEnv::new(&scenario).unwrap();
        let (dfs_length, dfs_reward) = dfs_optimal(&env, 6).unwrap();
        assert_eq!((dfs_length, dfs_reward), (2, 8.0));
    }

    #[test]
    fn scripted_replay_matches_the_oracle_numbers() {
        let env = baseline_env();
        let mut policy = ScriptedPolicy::new(OPTIMAL.to_vec());
        let record = run_episode(&env, &mut policy, 200, 0, 0).unwrap();
        assert_eq!(record.rows.len(), 9);
        assert_eq!(record.steps_to_full_ownership, Some(9));
        assert_eq!(record.final_reward(), 7491.0);
        assert_eq!(record.algorithm, "oracle");
        // Reward holds at checkpoints past the terminal step.
        assert_eq!(record.reward_at(10), 7491.0);
        assert_eq!(record.reward_at(200), 7491.0);
        assert_eq!(record.owned_at(200), 5);
        assert_eq!(record.owned_at(0), 1);
    }

    #[test]
    fn zero_budget_yields_an_empty_record() {
        let env = baseline_env();
        let mut policy = RandomPolicy;
        let record = run_episode(&env, &mut policy, 0, 3, 0).unwrap();
        assert!(record.rows.is_empty());
        assert_eq!(record.steps_to_full_ownership, None);
        assert_eq!(record.reward_at(10), 0.0);
        assert_eq!(record.owned_at(10), 1);
    }

    #[test]
    fn random_episodes_are_reproducible() {
        let env = baseline_env();
        let a = run_episode(&env, &mut RandomPolicy, 150, 11, 0).unwrap();
        let b = run_episode(&env, &mut RandomPolicy, 150, 11, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_policy_beats_the_oracle() {
        let env = baseline_env();
        let oracle_length = brute_force_optimal_env(&env, 15).unwrap().length as u32;
        for seed in 0..10 {
            let random = run_episode(&env, &mut RandomPolicy, 500, seed, 0).unwrap();
            let lookup =
                run_episode(&env, &mut CredentialLookupPolicy, 500, seed, 0).unwrap();
            for record in [random, lookup] {
                if let Some(steps) = record.steps_to_full_ownership {
                    assert!(
                        steps >= oracle_length,
                        "{} conquered in {steps} < {oracle_length}",
                        record.algorithm
                    );
                }
            }
        }
    }

    #[test]
    fn csv_of_nothing_is_just_the_header() {
        let mut buffer = Vec::new();
        write_csv(&[], &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert_eq!(
            text,
            "algorithm,seed,episode,step,action_id,succeeded,reward,cumulative_reward,nodes_owned\n"
        );
    }

    #[test]
    fn csv_row_count_is_header_plus_steps() {
        let env = baseline_env();
        let record =
            run_episode(&env, &mut ScriptedPolicy::new(OPTIMAL.to_vec()), 200, 0, 0).unwrap();
        let mut buffer = Vec::new();
        write_csv(&[record], &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.lines().nth(1).unwrap().starts_with("oracle,0,0,1,local:echo_dot:"));
        let last = text.lines().last().unwrap();
        assert!(last.ends_with(",4999,7491,5"), "unexpected final row: {last}");
    }

    #[test]
    fn csv_round_trip_rebuilds_records_and_stats() {
        let scenario = baseline_nuit();
        let config = BenchConfig {
            step_budget: 60,
            checkpoints: vec![10, 30, 60],
            threads: 1,
            ..BenchConfig::default()
        };
        let algorithms = [AlgorithmKind::Random, AlgorithmKind::CredLookup];
        let seeds: Vec<u64> = (0..4).collect();
        let report = run_benchmark(&scenario, &algorithms, &seeds, &config).unwrap();

        let mut buffer = Vec::new();
        write_csv(&report.records, &mut buffer).unwrap();
        let parsed = read_csv(buffer.as_slice(), 5).unwrap();

        assert_eq!(parsed, report.records);
        assert_eq!(
            recompute_stats(&parsed, &config.checkpoints, config.step_budget),
            report.stats
        );
    }

    #[test]
    fn read_csv_rejects_a_broken_running_sum() {
        let text = "algorithm,seed,episode,step,action_id,succeeded,reward,cumulative_reward,nodes_owned\n\
                    random,0,0,1,x,true,-1,-1,1\n\
                    random,0,0,2,x,true,-1,5,1\n";
        let err = read_csv(text.as_bytes(), 5).unwrap_err();
        assert!(err.to_string().contains("running sum"), "got: {err}");
    }

    #[test]
    fn benchmark_is_deterministic_across_thread_counts() {
        let scenario = baseline_nuit();
        let algorithms = [AlgorithmKind::Random, AlgorithmKind::CredLookup];
        let seeds: Vec<u64> = (0..6).collect();
        let single = BenchConfig {
            step_budget: 80,
            checkpoints: vec![10, 80],
            threads: 1,
            ..BenchConfig::default()
        };
        let many = BenchConfig {
            threads: 4,
            ..single.clone()
        };
        let a = run_benchmark(&scenario, &algorithms, &seeds, &single).unwrap();
        let b = run_benchmark(&scenario, &algorithms, &seeds, &many).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_algorithm_single_seed_report_is_that_episode() {
        let scenario = baseline_nuit();
        let config = BenchConfig {
            step_budget: 50,
            checkpoints: vec![10, 50],
            threads: 1,
            ..BenchConfig::default()
        };
        let report =
            run_benchmark(&scenario, &[AlgorithmKind::CredLookup], &[9], &config).unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.stats.len(), 1);
        let record = &report.records[0];
        let stats = &report.stats[0];
        let steps = record.steps_to_full_ownership.unwrap_or(50);
        assert_eq!(stats.mean_steps, steps as f64);
        assert_eq!(stats.min_steps, steps);
        assert_eq!(stats.max_steps, steps);
        assert_eq!(stats.mean_reward_at[1], record.reward_at(50));
    }

    #[test]
    fn empty_algorithm_or_seed_lists_are_rejected() {
        let scenario = baseline_nuit();
        let config = BenchConfig::default();
        assert!(matches!(
            run_benchmark(&scenario, &[], &[0], &config),
            Err(BenchError::Invalid(_))
        ));
        assert!(matches!(
            run_benchmark(&scenario, &[AlgorithmKind::Random], &[], &config),
            Err(BenchError::Invalid(_))
        ));
    }

    #[test]
    fn oracle_policy_in_a_benchmark_replays_the_bfs_path() {
        let scenario = baseline_nuit();
        let config = BenchConfig {
            step_budget: 50,
            checkpoints: vec![10, 50],
            threads: 1,
            ..BenchConfig::default()
        };
        let report =
            run_benchmark(&scenario, &[AlgorithmKind::Oracle], &[0, 1], &config).unwrap();
        for record in &report.records {
            assert_eq!(record.steps_to_full_ownership, Some(9));
            assert_eq!(record.final_reward(), 7491.0);
        }
    }
}
