//! Declarative attack-graph scenarios: the data model, a JSON loader and
//! validator, and the bundled five-node baseline.
//!
//! Declaration order is load-bearing throughout the crate: node order, the
//! order of vulnerabilities within a node, and the order in which credentials
//! are first leaked all fix the action enumeration, the state bitmaps, and
//! the feature encoding. Scenarios are immutable after construction and can
//! be shared freely across parallel environment instances.
//!
//! The on-disk format is JSON:
//!
//! ```json
//! {
//!   "name": "...",
//!   "entry_node": "...",
//!   "nodes": [
//!     {
//!       "id": "...", "value": 0.0,
//!       "services": ["HTTPS"], "firewall_allow": ["HTTPS"],
//!       "vulnerabilities": [
//!         {
//!           "id": "...", "locality": "local" | "remote",
//!           "via_service": "HTTPS",        // remote only
//!           "cost": 1.0,                   // optional, default 1
//!           "terminal": false,             // optional, default false
//!           "outcome": {"kind": "leak_credential", "credential_id": "...",
//!                       "target_node": "...", "port": "..."}
//!                    | {"kind": "discover_nodes", "node_ids": ["..."]}
//!                    | {"kind": "collect_data", "reward": 0.0}
//!         }
//!       ]
//!     }
//!   ]
//! }
//! ```

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use thiserror::Error;

use crate::bench;
use crate::env::AttackEnv;

/// How a vulnerability is exercised: from code already running on the node,
/// or over the network against a listening service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locality {
    Local,
    Remote,
}

impl fmt::Display for Locality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locality::Local => write!(f, "local"),
            Locality::Remote => write!(f, "remote"),
        }
    }
}

/// Effect of successfully executing a vulnerability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// Grants a credential for connecting to `target_node` over `port`, and
    /// discovers that node.
    LeakCredential {
        credential_id: String,
        target_node: String,
        port: String,
    },
    /// Adds nodes to the discovered set.
    DiscoverNodes { node_ids: Vec<String> },
    /// One-time bonus reward; repeat executions grant nothing further.
    CollectData {
        #[serde(default)]
        reward: f64,
    },
}

fn default_cost() -> f64 {
    1.0
}

/// One exploitable weakness hosted on a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VulnerabilitySpec {
    pub id: String,
    pub locality: Locality,
    /// Service the exploit travels over; present exactly when remote.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via_service: Option<String>,
    /// Points charged on every attempt, successful or not.
    #[serde(default = "default_cost")]
    pub cost: f64,
    /// A successful execution ends the episode.
    #[serde(default)]
    pub terminal: bool,
    pub outcome: Outcome,
}

/// A device or asset in the attack graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    /// Points granted the first time the node becomes owned.
    pub value: f64,
    /// Ports the node listens on.
    #[serde(default)]
    pub services: Vec<String>,
    /// Ports permitted inbound by the node's firewall.
    #[serde(default)]
    pub firewall_allow: Vec<String>,
    #[serde(default)]
    pub vulnerabilities: Vec<VulnerabilitySpec>,
}

/// A full attack-graph description. The attacker starts owning `entry_node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub entry_node: String,
    pub nodes: Vec<NodeSpec>,
}

/// A derived credential entry: which node it unlocks and over which port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredentialSpec {
    pub id: String,
    pub target_node: String,
    pub port: String,
}

/// How bad a validation finding is. Errors make a scenario unusable;
/// warnings (currently only unwinnability) do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

/// One validation finding, with a JSON-style path to the offending element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl Violation {
    fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        }
    }

    fn warning(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.severity, self.path, self.message)
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    /// The document is not valid JSON for the scenario schema.
    #[error("parse error at {path}: {detail}")]
    Parse { path: String, detail: String },
    /// The document parsed but breaks scenario invariants.
    #[error("invalid scenario: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Scenario {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn vulnerability_count(&self) -> usize {
        self.nodes.iter().map(|n| n.vulnerabilities.len()).sum()
    }

    /// Credentials in the order their leaking vulnerabilities are declared.
    /// This order fixes the credential bitmap and the Connect action order.
    pub fn credentials(&self) -> Vec<CredentialSpec> {
        let mut out = Vec::new();
        for node in &self.nodes {
            for vuln in &node.vulnerabilities {
                if let Outcome::LeakCredential {
                    credential_id,
                    target_node,
                    port,
                } = &vuln.outcome
                {
                    if out.iter().all(|c: &CredentialSpec| &c.id != credential_id) {
                        out.push(CredentialSpec {
                            id: credential_id.clone(),
                            target_node: target_node.clone(),
                            port: port.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    /// Canonical pretty-printed JSON; stable byte-for-byte across runs.
    pub fn to_json_pretty(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario serialization");
        text.push('\n');
        text
    }

    /// Structural checks only: id uniqueness, dangling references, locality
    /// rules, value/cost ranges. Used by the environment constructor, which
    /// must not depend on winnability.
    pub fn validate_structure(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        let known_ports: BTreeSet<&str> = self
            .nodes
            .iter()
            .flat_map(|n| n.services.iter().map(String::as_str))
            .collect();

        if self.node_index(&self.entry_node).is_none() {
            out.push(Violation::error(
                "entry_node",
                format!("unknown node id `{}`", self.entry_node),
            ));
        }

        let mut seen_nodes: BTreeSet<&str> = BTreeSet::new();
        let mut seen_vulns: BTreeSet<&str> = BTreeSet::new();
        let mut seen_credentials: BTreeSet<&str> = BTreeSet::new();

        for (i, node) in self.nodes.iter().enumerate() {
            let npath = format!("nodes[{i}]");
            if node.id.is_empty() {
                out.push(Violation::error(format!("{npath}.id"), "empty node id"));
            } else if !seen_nodes.insert(&node.id) {
                out.push(Violation::error(
                    format!("{npath}.id"),
                    format!("duplicate node id `{}`", node.id),
                ));
            }
            if !node.value.is_finite() || node.value < 0.0 {
                out.push(Violation::error(
                    format!("{npath}.value"),
                    format!("node value must be finite and non-negative, got {}", node.value),
                ));
            }
            for (j, port) in node.firewall_allow.iter().enumerate() {
                if !known_ports.contains(port.as_str()) {
                    out.push(Violation::error(
                        format!("{npath}.firewall_allow[{j}]"),
                        format!("port `{port}` is not served by any node"),
                    ));
                }
            }

            for (j, vuln) in node.vulnerabilities.iter().enumerate() {
                let vpath = format!("{npath}.vulnerabilities[{j}]");
                if vuln.id.is_empty() {
                    out.push(Violation::error(format!("{vpath}.id"), "empty vulnerability id"));
                } else if !seen_vulns.insert(&vuln.id) {
                    out.push(Violation::error(
                        format!("{vpath}.id"),
                        format!("duplicate vulnerability id `{}`", vuln.id),
                    ));
                }
                if !vuln.cost.is_finite() || vuln.cost < 0.0 {
                    out.push(Violation::error(
                        format!("{vpath}.cost"),
                        format!("cost must be finite and non-negative, got {}", vuln.cost),
                    ));
                }
                match (vuln.locality, &vuln.via_service) {
                    (Locality::Local, Some(_)) => out.push(Violation::error(
                        format!("{vpath}.via_service"),
                        "local vulnerabilities must not name a service",
                    )),
                    (Locality::Remote, None) => out.push(Violation::error(
                        format!("{vpath}.via_service"),
                        "remote vulnerabilities must name exactly one service",
                    )),
                    (Locality::Remote, Some(port)) if !known_ports.contains(port.as_str()) => {
                        out.push(Violation::error(
                            format!("{vpath}.via_service"),
                            format!("port `{port}` is not served by any node"),
                        ));
                    }
                    _ => {}
                }
                match &vuln.outcome {
                    Outcome::LeakCredential {
                        credential_id,
                        target_node,
                        port,
                    } => {
                        if credential_id.is_empty() {
                            out.push(Violation::error(
                                format!("{vpath}.outcome.credential_id"),
                                "empty credential id",
                            ));
                        } else if !seen_credentials.insert(credential_id) {
                            out.push(Violation::error(
                                format!("{vpath}.outcome.credential_id"),
                                format!("credential `{credential_id}` is leaked by more than one vulnerability"),
                            ));
                        }
                        match self.node(target_node) {
                            None => out.push(Violation::error(
                                format!("{vpath}.outcome.target_node"),
                                format!("unknown node id `{target_node}`"),
                            )),
                            Some(target) => {
                                if !target.services.contains(port) {
                                    out.push(Violation::error(
                                        format!("{vpath}.outcome.port"),
                                        format!("node `{target_node}` does not serve port `{port}`"),
                                    ));
                                }
                            }
                        }
                    }
                    Outcome::DiscoverNodes { node_ids } => {
                        for (k, id) in node_ids.iter().enumerate() {
                            if self.node(id).is_none() {
                                out.push(Violation::error(
                                    format!("{vpath}.outcome.node_ids[{k}]"),
                                    format!("unknown node id `{id}`"),
                                ));
                            }
                        }
                    }
                    Outcome::CollectData { reward } => {
                        if !reward.is_finite() || *reward < 0.0 {
                            out.push(Violation::error(
                                format!("{vpath}.outcome.reward"),
                                format!("reward must be finite and non-negative, got {reward}"),
                            ));
                        }
                    }
                }
            }
        }

        out
    }

    /// Full validation: everything in [`Scenario::validate_structure`], plus
    /// a winnability probe. An unwinnable graph (no action sequence reaches
    /// full ownership) is reported as a warning, not an error, so deliberately
    /// unsolvable scenarios can still be loaded and benchmarked.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.validate_structure();
        if out.iter().any(Violation::is_error) {
            return out;
        }
        match AttackEnv::new(self) {
            Ok(env) => {
                // A minimal full-ownership sequence never revisits a state,
                // and every step flips at least one monotone bit, so the
                // state-bit width bounds the search depth.
                let depth = env.key_width().max(1);
                if bench::brute_force_optimal_env(&env, depth).is_none() {
                    out.push(Violation::warning(
                        "scenario",
                        format!(
                            "no action sequence reaches full ownership within {depth} steps; \
                             the scenario is not winnable"
                        ),
                    ));
                }
            }
            Err(err) => out.push(Violation::warning(
                "scenario",
                format!("winnability not checked: {err}"),
            )),
        }
        out
    }
}

/// Parses a scenario document and rejects it if structural invariants fail.
/// Winnability is deliberately not checked here; see [`Scenario::validate`].
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario =
        serde_path_to_error::deserialize(de).map_err(|err| ScenarioError::Parse {
            path: err.path().to_string(),
            detail: err.inner().to_string(),
        })?;
    let errors: Vec<Violation> = scenario
        .validate_structure()
        .into_iter()
        .filter(Violation::is_error)
        .collect();
    if !errors.is_empty() {
        return Err(ScenarioError::Invalid(errors));
    }
    Ok(scenario)
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

/// The bundled five-node scenario: a smart-speaker foothold leads through a
/// webmail account and a phone to a smart door and finally an air-gapped
/// classified machine. Physical accesses are modeled as an ordinary
/// `physical` port. The entry node is the speaker; everything else must be
/// discovered, phished, or unlocked.
pub fn baseline_nuit() -> Scenario {
    fn leak(credential: &str, target: &str, port: &str) -> Outcome {
        Outcome::LeakCredential {
            credential_id: credential.to_owned(),
            target_node: target.to_owned(),
            port: port.to_owned(),
        }
    }
    fn local(id: &str, outcome: Outcome) -> VulnerabilitySpec {
        VulnerabilitySpec {
            id: id.to_owned(),
            locality: Locality::Local,
            via_service: None,
            cost: 1.0,
            terminal: false,
            outcome,
        }
    }
    fn strs(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| (*s).to_owned()).collect()
    }

    Scenario {
        name: "baseline-nuit".to_owned(),
        entry_node: "echo_dot".to_owned(),
        nodes: vec![
            NodeSpec {
                id: "echo_dot".to_owned(),
                value: 0.0,
                // The speaker is the pre-owned foothold; nothing connects
                // back to it, so it serves no ports.
                services: vec![],
                firewall_allow: strs(&["HTTPS"]),
                vulnerabilities: vec![local(
                    "malicious_alexa_skill",
                    leak("email_creds", "email_account", "HTTPS"),
                )],
            },
            NodeSpec {
                id: "email_account".to_owned(),
                value: 500.0,
                services: strs(&["HTTPS"]),
                firewall_allow: strs(&["HTTPS"]),
                vulnerabilities: vec![
                    local(
                        "find_device_type_in_email",
                        Outcome::DiscoverNodes {
                            node_ids: strs(&["iphone"]),
                        },
                    ),
                    local("collect_data_from_emails", Outcome::CollectData { reward: 0.0 }),
                ],
            },
            NodeSpec {
                id: "iphone".to_owned(),
                value: 1000.0,
                services: strs(&["HTTPS"]),
                firewall_allow: strs(&["HTTPS"]),
                vulnerabilities: vec![
                    local("unlock_door_via_nuit", leak("door_open", "door", "physical")),
                    VulnerabilitySpec {
                        id: "nuit1_phishing_email".to_owned(),
                        locality: Locality::Remote,
                        via_service: Some("HTTPS".to_owned()),
                        cost: 1.0,
                        terminal: false,
                        outcome: leak("iphone_control", "iphone", "HTTPS"),
                    },
                ],
            },
            NodeSpec {
                id: "door".to_owned(),
                value: 1000.0,
                services: strs(&["physical"]),
                firewall_allow: strs(&["physical"]),
                vulnerabilities: vec![local(
                    "steal_classified_laptop",
                    leak("physical_possession", "classified_machine", "physical"),
                )],
            },
            NodeSpec {
                id: "classified_machine".to_owned(),
                value: 5000.0,
                services: strs(&["physical"]),
                firewall_allow: strs(&["physical"]),
                vulnerabilities: vec![VulnerabilitySpec {
                    id: "access_state_secrets".to_owned(),
                    locality: Locality::Local,
                    via_service: None,
                    cost: 1.0,
                    terminal: true,
                    outcome: Outcome::CollectData { reward: 0.0 },
                }],
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_node_values() {
        let s = baseline_nuit();
        let values: Vec<f64> = s.nodes.iter().map(|n| n.value).collect();
        assert_eq!(values, vec![0.0, 500.0, 1000.0, 1000.0, 5000.0]);
        assert_eq!(s.entry_node, "echo_dot");
        assert_eq!(s.nodes.len(), 5);
        assert_eq!(s.vulnerability_count(), 7);
    }

    #[test]
    fn baseline_validates_clean() {
        assert_eq!(baseline_nuit().validate(), vec![]);
    }

    #[test]
    fn baseline_serialization_is_stable() {
        let a = baseline_nuit().to_json_pretty();
        let b = baseline_nuit().to_json_pretty();
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
    }

    #[test]
    fn baseline_round_trips() {
        let s = baseline_nuit();
        let loaded = load_scenario(&s.to_json_pretty()).unwrap();
        assert_eq!(loaded, s);
    }

    #[test]
    fn credential_order_follows_declaration() {
        let creds = baseline_nuit().credentials();
        let ids: Vec<&str> = creds.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(
            ids,
            vec!["email_creds", "door_open", "iphone_control", "physical_possession"]
        );
        assert_eq!(creds[0].target_node, "email_account");
        assert_eq!(creds[0].port, "HTTPS");
    }

    #[test]
    fn cost_and_terminal_default() {
        let text = r#"{
            "name": "t", "entry_node": "a",
            "nodes": [{
                "id": "a", "value": 0, "services": ["p"], "firewall_allow": [],
                "vulnerabilities": [{
                    "id": "v", "locality": "local",
                    "outcome": {"kind": "collect_data"}
                }]
            }]
        }"#;
        let s = load_scenario(text).unwrap();
        let v = &s.nodes[0].vulnerabilities[0];
        assert_eq!(v.cost, 1.0);
        assert!(!v.terminal);
        assert_eq!(v.outcome, Outcome::CollectData { reward: 0.0 });
    }

    #[test]
    fn dangling_target_names_the_path() {
        let mut s = baseline_nuit();
        if let Outcome::LeakCredential { target_node, .. } =
            &mut s.nodes[2].vulnerabilities[0].outcome
        {
            *target_node = "ipone".to_owned();
        } else {
            panic!("expected a credential leak");
        }
        let err = load_scenario(&s.to_json_pretty()).unwrap_err();
        match err {
            ScenarioError::Invalid(violations) => {
                assert!(violations.iter().any(|v| {
                    v.path == "nodes[2].vulnerabilities[0].outcome.target_node"
                        && v.message.contains("ipone")
                }));
            }
            other => panic!("expected invalid-scenario error, got {other}"),
        }
    }

    #[test]
    fn duplicate_credential_is_a_violation() {
        let mut s = baseline_nuit();
        // Make the door's leak reuse the email credential id.
        if let Outcome::LeakCredential { credential_id, .. } =
            &mut s.nodes[3].vulnerabilities[0].outcome
        {
            *credential_id = "email_creds".to_owned();
        }
        let violations = s.validate_structure();
        assert!(violations
            .iter()
            .any(|v| v.is_error() && v.message.contains("more than one vulnerability")));
    }

    #[test]
    fn unknown_field_is_rejected_with_a_path() {
        let text = r#"{"name": "t", "entry_node": "a", "nodes": [], "extra": 1}"#;
        match load_scenario(text).unwrap_err() {
            ScenarioError::Parse { detail, .. } => assert!(detail.contains("extra")),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn unknown_port_in_firewall_is_a_violation() {
        let mut s = baseline_nuit();
        s.nodes[1].firewall_allow.push("telnet".to_owned());
        let violations = s.validate_structure();
        assert!(violations.iter().any(|v| {
            v.is_error() && v.path == "nodes[1].firewall_allow[1]" && v.message.contains("telnet")
        }));
    }

    #[test]
    fn via_service_on_local_is_a_violation() {
        let mut s = baseline_nuit();
        s.nodes[0].vulnerabilities[0].via_service = Some("HTTPS".to_owned());
        let violations = s.validate_structure();
        assert!(violations
            .iter()
            .any(|v| v.is_error() && v.path.ends_with("via_service")));
    }

    #[test]
    fn closed_firewall_warns_unwinnable() {
        let mut s = baseline_nuit();
        s.nodes[1].firewall_allow.clear();
        let violations = s.validate();
        assert!(violations.iter().all(|v| !v.is_error()));
        assert!(violations
            .iter()
            .any(|v| v.severity == Severity::Warning && v.message.contains("not winnable")));
    }

    #[test]
    fn negative_cost_is_a_violation() {
        let mut s = baseline_nuit();
        s.nodes[0].vulnerabilities[0].cost = -2.0;
        assert!(s.validate_structure().iter().any(|v| v.path.ends_with(".cost")));
    }
}
