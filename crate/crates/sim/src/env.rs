//! The simulation environment: compiles a scenario into a fixed, enumerated
//! action space and applies attacker actions to immutable state values.
//!
//! State is a handful of bitmaps in scenario declaration order, so stepping
//! is a pure function and states copy for free. The environment itself has
//! no randomness — a trajectory is fully determined by (scenario, action
//! sequence); seeds only drive policies.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

use crate::scenario::{Locality, Outcome, Scenario, Violation};

/// One attacker move, keyed by the ids used in scenario files.
///
/// Remote exploits and connects are keyed by target only: any owned node
/// serves as the source, since the graph has no per-source firewall rules.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    LocalExploit { node: String, vuln_id: String },
    RemoteExploit { target: String, vuln_id: String },
    Connect {
        target: String,
        port: String,
        credential_id: String,
    },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::LocalExploit { node, vuln_id } => write!(f, "local:{node}:{vuln_id}"),
            Action::RemoteExploit { target, vuln_id } => write!(f, "remote:{target}:{vuln_id}"),
            Action::Connect {
                target,
                port,
                credential_id,
            } => write!(f, "connect:{target}:{port}:{credential_id}"),
        }
    }
}

/// Snapshot of attacker progress. The five sets are bitmaps whose bit order
/// follows scenario declaration order; [`AttackEnv`] translates to and from
/// ids. Sets only ever grow, so replaying a prefix always reproduces a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub owned: u64,
    pub discovered: u64,
    pub credentials: u64,
    /// Vulnerabilities successfully executed at least once.
    pub executed: u64,
    /// Data-collection vulnerabilities whose one-time bonus has fired.
    pub collected: u64,
    pub step_count: u32,
    pub cumulative_reward: f64,
    pub terminal: bool,
    /// Seed recorded at reset; the environment never draws from it.
    pub rng_seed: u64,
}

/// Outcome of applying one action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Outcome reward plus first-time ownership value, minus the action cost.
    /// Failed actions earn exactly minus the cost.
    pub reward: f64,
    pub succeeded: bool,
    pub newly_discovered: Vec<String>,
    pub newly_owned: Vec<String>,
    pub leaked_credentials: Vec<String>,
    pub terminal: bool,
}

/// Speed and depth of conquest, read off a state without mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConquestMetrics {
    pub steps: u32,
    pub nodes_owned: u32,
    pub all_owned: bool,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(Violation),
    /// The action references ids outside the enumerated action space. This is
    /// a rejection, distinct from an in-game failed action.
    #[error("unknown action: {0}")]
    UnknownAction(String),
    #[error("action index {index} out of range for an action space of {count}")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("scenario too large: {0}")]
    TooLarge(String),
}

#[derive(Debug, Clone)]
enum CompiledOutcome {
    Leak { credential: usize, target: usize },
    Discover { nodes: u64 },
    Collect { reward: f64, slot: usize },
}

#[derive(Debug, Clone)]
struct CompiledVuln {
    terminal: bool,
    outcome: CompiledOutcome,
}

#[derive(Debug, Clone, Copy)]
enum ActionBody {
    Local {
        node: usize,
        vuln: usize,
    },
    Remote {
        target: usize,
        vuln: usize,
        /// Target serves the exploited port and its firewall admits it.
        reachable: bool,
    },
    Connect {
        target: usize,
        credential: usize,
        /// Target serves the credential's port and its firewall admits it.
        reachable: bool,
    },
}

#[derive(Debug, Clone)]
struct CompiledAction {
    cost: f64,
    body: ActionBody,
}

/// A scenario compiled for fast stepping: interned ids, a deterministic
/// action enumeration, and precomputed reachability flags.
#[derive(Debug, Clone)]
pub struct AttackEnv {
    scenario: Scenario,
    node_ids: Vec<String>,
    node_values: Vec<f64>,
    credential_ids: Vec<String>,
    vuln_ids: Vec<String>,
    vulns: Vec<CompiledVuln>,
    collect_slot_vulns: Vec<usize>,
    actions: Vec<Action>,
    compiled: Vec<CompiledAction>,
    index: HashMap<Action, usize>,
    entry: usize,
    full_mask: u64,
}

fn bit(i: usize) -> u64 {
    1u64 << i
}

impl AttackEnv {
    /// Compiles a scenario, rejecting it on the first structural violation.
    pub fn new(scenario: &Scenario) -> Result<Self, EnvError> {
        if let Some(violation) = scenario
            .validate_structure()
            .into_iter()
            .find(Violation::is_error)
        {
            return Err(EnvError::InvalidScenario(violation));
        }

        let node_ids: Vec<String> = scenario.nodes.iter().map(|n| n.id.clone()).collect();
        let node_values: Vec<f64> = scenario.nodes.iter().map(|n| n.value).collect();
        if node_ids.len() > 64 {
            return Err(EnvError::TooLarge(format!(
                "{} nodes exceed the 64-node bitmap",
                node_ids.len()
            )));
        }

        let credential_specs = scenario.credentials();
        let credential_ids: Vec<String> = credential_specs.iter().map(|c| c.id.clone()).collect();
        let credential_index: HashMap<&str, usize> = credential_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();

        let node_index: HashMap<&str, usize> = node_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();

        // Global vulnerability order: node declaration order, then
        // per-node declaration order. This fixes the executed bitmap.
        let mut vuln_ids = Vec::new();
        let mut vulns = Vec::new();
        let mut collect_slot_vulns = Vec::new();
        for node in &scenario.nodes {
            for vuln in &node.vulnerabilities {
                let outcome = match &vuln.outcome {
                    Outcome::LeakCredential {
                        credential_id,
                        target_node,
                        ..
                    } => CompiledOutcome::Leak {
                        credential: credential_index[credential_id.as_str()],
                        target: node_index[target_node.as_str()],
                    },
                    Outcome::DiscoverNodes { node_ids: ids } => CompiledOutcome::Discover {
                        nodes: ids.iter().fold(0u64, |acc, id| {
                            acc | bit(node_index[id.as_str()])
                        }),
                    },
                    Outcome::CollectData { reward } => {
                        let slot = collect_slot_vulns.len();
                        collect_slot_vulns.push(vulns.len());
                        CompiledOutcome::Collect {
                            reward: *reward,
                            slot,
                        }
                    }
                };
                vuln_ids.push(vuln.id.clone());
                vulns.push(CompiledVuln {
                    terminal: vuln.terminal,
                    outcome,
                });
            }
        }
        for (what, len) in [
            ("vulnerabilities", vulns.len()),
            ("credentials", credential_ids.len()),
            ("data-collection vulnerabilities", collect_slot_vulns.len()),
        ] {
            if len > 64 {
                return Err(EnvError::TooLarge(format!(
                    "{len} {what} exceed the 64-bit bitmap"
                )));
            }
        }
        let key_width = 2 * node_ids.len()
            + credential_ids.len()
            + vulns.len()
            + collect_slot_vulns.len();
        if key_width > 128 {
            return Err(EnvError::TooLarge(format!(
                "state key needs {key_width} bits; at most 128 are supported"
            )));
        }

        // Enumeration order: all local exploits (node order, then declaration
        // order), then all remote exploits, then one connect per leaked
        // credential in first-leak order.
        let mut actions = Vec::new();
        let mut compiled = Vec::new();
        let mut global_vuln = 0usize;
        let mut remote_actions = Vec::new();
        for (ni, node) in scenario.nodes.iter().enumerate() {
            for vuln in &node.vulnerabilities {
                match vuln.locality {
                    Locality::Local => {
                        actions.push(Action::LocalExploit {
                            node: node.id.clone(),
                            vuln_id: vuln.id.clone(),
                        });
                        compiled.push(CompiledAction {
                            cost: vuln.cost,
                            body: ActionBody::Local {
                                node: ni,
                                vuln: global_vuln,
                            },
                        });
                    }
                    Locality::Remote => {
                        let port = vuln.via_service.as_deref().expect("validated remote");
                        let reachable = node.services.iter().any(|s| s == port)
                            && node.firewall_allow.iter().any(|s| s == port);
                        remote_actions.push((
                            Action::RemoteExploit {
                                target: node.id.clone(),
                                vuln_id: vuln.id.clone(),
                            },
                            CompiledAction {
                                cost: vuln.cost,
                                body: ActionBody::Remote {
                                    target: ni,
                                    vuln: global_vuln,
                                    reachable,
                                },
                            },
                        ));
                    }
                }
                global_vuln += 1;
            }
        }
        for (action, body) in remote_actions {
            actions.push(action);
            compiled.push(body);
        }
        for (ci, cred) in credential_specs.iter().enumerate() {
            let target = node_index[cred.target_node.as_str()];
            let target_node = &scenario.nodes[target];
            let reachable = target_node.services.iter().any(|s| s == &cred.port)
                && target_node.firewall_allow.iter().any(|s| s == &cred.port);
            actions.push(Action::Connect {
                target: cred.target_node.clone(),
                port: cred.port.clone(),
                credential_id: cred.id.clone(),
            });
            compiled.push(CompiledAction {
                cost: 1.0,
                body: ActionBody::Connect {
                    target,
                    credential: ci,
                    reachable,
                },
            });
        }

        let index: HashMap<Action, usize> = actions
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, a)| (a, i))
            .collect();
        let entry = node_index[scenario.entry_node.as_str()];
        let full_mask = if node_ids.is_empty() {
            0
        } else {
            (bit(node_ids.len() - 1) << 1).wrapping_sub(1)
        };

        Ok(AttackEnv {
            scenario: scenario.clone(),
            node_ids,
            node_values,
            credential_ids,
            vuln_ids,
            vulns,
            collect_slot_vulns,
            actions,
            compiled,
            index,
            entry,
            full_mask,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn credential_count(&self) -> usize {
        self.credential_ids.len()
    }

    pub fn vulnerability_count(&self) -> usize {
        self.vulns.len()
    }

    pub fn collect_count(&self) -> usize {
        self.collect_slot_vulns.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    /// The enumerated action space; stable for a given scenario.
    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, index: usize) -> Option<&Action> {
        self.actions.get(index)
    }

    pub fn action_index(&self, action: &Action) -> Option<usize> {
        self.index.get(action).copied()
    }

    pub fn node_id(&self, index: usize) -> &str {
        &self.node_ids[index]
    }

    pub fn node_value(&self, index: usize) -> f64 {
        self.node_values[index]
    }

    pub fn entry_node(&self) -> &str {
        &self.node_ids[self.entry]
    }

    /// Bit widths of (owned, discovered, credentials, executed, collected).
    pub fn bit_widths(&self) -> [usize; 5] {
        [
            self.node_ids.len(),
            self.node_ids.len(),
            self.credential_ids.len(),
            self.vulns.len(),
            self.collect_slot_vulns.len(),
        ]
    }

    /// Total packed state-key width in bits.
    pub fn key_width(&self) -> usize {
        self.bit_widths().iter().sum()
    }

    /// For Connect actions, the (target node, credential) index pair.
    pub fn connect_indices(&self, action: usize) -> Option<(usize, usize)> {
        match self.compiled.get(action)?.body {
            ActionBody::Connect {
                target, credential, ..
            } => Some((target, credential)),
            _ => None,
        }
    }

    /// Fresh state: the entry node owned and discovered, nothing else. The
    /// seed is stored for provenance only. A one-node graph is terminal
    /// immediately, since everything is already owned.
    pub fn reset(&self, seed: u64) -> EnvState {
        let owned = bit(self.entry);
        EnvState {
            owned,
            discovered: owned,
            credentials: 0,
            executed: 0,
            collected: 0,
            step_count: 0,
            cumulative_reward: 0.0,
            terminal: owned == self.full_mask,
            rng_seed: seed,
        }
    }

    /// Applies an action given by id triplets. Unknown ids are a rejection;
    /// see [`AttackEnv::step_index`] for the in-game semantics.
    pub fn step(&self, state: &EnvState, action: &Action) -> Result<(EnvState, StepResult), EnvError> {
        let index = self
            .action_index(action)
            .ok_or_else(|| EnvError::UnknownAction(action.to_string()))?;
        self.step_index(state, index)
    }

    /// Applies the `index`-th enumerated action.
    ///
    /// Success conditions:
    /// - local exploit: the hosting node is owned;
    /// - remote exploit: the target is discovered, serves the exploited port,
    ///   and its firewall admits that port;
    /// - connect: the credential is held and the target serves/admits its
    ///   port. Connecting grants ownership; the node's value is paid out on
    ///   first ownership only.
    ///
    /// A failed action changes nothing but the step counter and costs its
    /// action cost. Side effects are idempotent: re-executions re-apply set
    /// unions (no-ops), while one-time rewards never fire twice.
    pub fn step_index(
        &self,
        state: &EnvState,
        index: usize,
    ) -> Result<(EnvState, StepResult), EnvError> {
        let Some(compiled) = self.compiled.get(index) else {
            return Err(EnvError::IndexOutOfRange {
                index,
                count: self.compiled.len(),
            });
        };
        let mut next = *state;
        next.step_count += 1;
        let mut result = StepResult {
            reward: -compiled.cost,
            succeeded: false,
            newly_discovered: Vec::new(),
            newly_owned: Vec::new(),
            leaked_credentials: Vec::new(),
            terminal: state.terminal,
        };

        let succeeded = match compiled.body {
            ActionBody::Local { node, .. } => state.owned & bit(node) != 0,
            ActionBody::Remote {
                target, reachable, ..
            } => reachable && state.discovered & bit(target) != 0,
            ActionBody::Connect {
                credential,
                reachable,
                ..
            } => reachable && state.credentials & bit(credential) != 0,
        };

        if succeeded {
            result.succeeded = true;
            match compiled.body {
                ActionBody::Local { vuln, .. } | ActionBody::Remote { vuln, .. } => {
                    next.executed |= bit(vuln);
                    let spec = &self.vulns[vuln];
                    match &spec.outcome {
                        CompiledOutcome::Leak { credential, target } => {
                            if next.credentials & bit(*credential) == 0 {
                                next.credentials |= bit(*credential);
                                result
                                    .leaked_credentials
                                    .push(self.credential_ids[*credential].clone());
                            }
                            if next.discovered & bit(*target) == 0 {
                                next.discovered |= bit(*target);
                                result.newly_discovered.push(self.node_ids[*target].clone());
                            }
                        }
                        CompiledOutcome::Discover { nodes } => {
                            let mut fresh = nodes & !next.discovered;
                            next.discovered |= nodes;
                            while fresh != 0 {
                                let i = fresh.trailing_zeros() as usize;
                                result.newly_discovered.push(self.node_ids[i].clone());
                                fresh &= fresh - 1;
                            }
                        }
                        CompiledOutcome::Collect { reward, slot } => {
                            if next.collected & bit(*slot) == 0 {
                                next.collected |= bit(*slot);
                                result.reward += reward;
                            }
                        }
                    }
                    if spec.terminal {
                        next.terminal = true;
                    }
                }
                ActionBody::Connect { target, .. } => {
                    if next.discovered & bit(target) == 0 {
                        next.discovered |= bit(target);
                        result.newly_discovered.push(self.node_ids[target].clone());
                    }
                    if next.owned & bit(target) == 0 {
                        next.owned |= bit(target);
                        result.reward += self.node_values[target];
                        result.newly_owned.push(self.node_ids[target].clone());
                    }
                }
            }
        }

        next.cumulative_reward += result.reward;
        if next.owned == self.full_mask {
            next.terminal = true;
        }
        result.terminal = next.terminal;
        Ok((next, result))
    }

    pub fn conquest_metrics(&self, state: &EnvState) -> ConquestMetrics {
        ConquestMetrics {
            steps: state.step_count,
            nodes_owned: state.owned.count_ones(),
            all_owned: state.owned == self.full_mask,
        }
    }

    pub fn owned_ids<'a>(&'a self, state: &EnvState) -> Vec<&'a str> {
        self.select_ids(&self.node_ids, state.owned)
    }

    pub fn discovered_ids<'a>(&'a self, state: &EnvState) -> Vec<&'a str> {
        self.select_ids(&self.node_ids, state.discovered)
    }

    pub fn held_credential_ids<'a>(&'a self, state: &EnvState) -> Vec<&'a str> {
        self.select_ids(&self.credential_ids, state.credentials)
    }

    pub fn executed_vuln_ids<'a>(&'a self, state: &EnvState) -> Vec<&'a str> {
        self.select_ids(&self.vuln_ids, state.executed)
    }

    pub fn collected_vuln_ids<'a>(&'a self, state: &EnvState) -> Vec<&'a str> {
        let mut out = Vec::new();
        for (slot, vuln) in self.collect_slot_vulns.iter().enumerate() {
            if state.collected & bit(slot) != 0 {
                out.push(self.vuln_ids[*vuln].as_str());
            }
        }
        out
    }

    fn select_ids<'a>(&self, ids: &'a [String], mask: u64) -> Vec<&'a str> {
        ids.iter()
            .enumerate()
            .filter(|(i, _)| mask & bit(*i) != 0)
            .map(|(_, id)| id.as_str())
            .collect()
    }
}

/// The unique shortest full-ownership sequence on the baseline, as action
/// indices: skill, connect mail, find phone, phish, connect phone, unlock,
/// connect door, steal laptop, connect machine. Shared across test modules.
#[cfg(test)]
pub(crate) const OPTIMAL: [usize; 9] = [0, 7, 1, 6, 9, 3, 8, 4, 10];
