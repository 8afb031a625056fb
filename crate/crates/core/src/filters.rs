// SPDX-License-Identifier: Apache-2.0

//! Peerlock and Peerlock-lite import filters and the protection scenarios
//! built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::topology::{AsTopology, NeighborKind, UclaClass};
use crate::types::Asn;

/// A single protector/protected pairing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerlockRule {
    pub protector: Asn,
    pub protected: Asn,
    pub authorized_upstreams: BTreeSet<Asn>,
}

impl PeerlockRule {
    pub fn new(protector: Asn, protected: Asn) -> Self {
        PeerlockRule {
            protector,
            protected,
            authorized_upstreams: BTreeSet::new(),
        }
    }

    pub fn with_upstreams(mut self, upstreams: impl IntoIterator<Item = Asn>) -> Self {
        self.authorized_upstreams.extend(upstreams);
        self
    }
}

/// Peerlock rules keyed by `(protector, protected)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeerlockRules {
    by_protector: BTreeMap<Asn, BTreeMap<Asn, BTreeSet<Asn>>>,
}

impl PeerlockRules {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a rule. Re-inserting an existing pair merges its authorized
    /// upstreams.
    pub fn insert(&mut self, rule: PeerlockRule) -> Result<()> {
        if rule.protector == rule.protected {
            return Err(Error::InvalidRule(format!(
                "AS {} cannot protect itself",
                rule.protector
            )));
        }
        self.by_protector
            .entry(rule.protector)
            .or_default()
            .entry(rule.protected)
            .or_default()
            .extend(rule.authorized_upstreams);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.by_protector.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_protector.is_empty()
    }

    pub fn get(&self, protector: Asn, protected: Asn) -> Option<&BTreeSet<Asn>> {
        self.by_protector.get(&protector)?.get(&protected)
    }

    /// Rules held by one protector: protected AS -> authorized upstreams.
    pub fn for_protector(&self, protector: Asn) -> Option<&BTreeMap<Asn, BTreeSet<Asn>>> {
        self.by_protector.get(&protector)
    }

    pub fn iter(&self) -> impl Iterator<Item = PeerlockRule> + '_ {
        self.by_protector.iter().flat_map(|(&protector, m)| {
            m.iter().map(move |(&protected, up)| PeerlockRule {
                protector,
                protected,
                authorized_upstreams: up.clone(),
            })
        })
    }
}

fn rule_permits(protected: Asn, upstreams: &BTreeSet<Asn>, sender: Asn, path: &[Asn]) -> bool {
    if !path.contains(&protected) || sender == protected {
        return true;
    }
    upstreams.contains(&sender) && path.windows(2).any(|w| w[0] == sender && w[1] == protected)
}

/// Peerlock import check at `receiver` for an update from `sender`.
///
/// For every rule held by `receiver` whose protected AS appears on the path,
/// the update must arrive directly from the protected AS, or from one of its
/// authorized upstreams with the protected AS immediately following it.
pub fn peerlock_permits(rules: &PeerlockRules, receiver: Asn, sender: Asn, as_path: &[Asn]) -> bool {
    rules.for_protector(receiver).is_none_or(|m| {
        m.iter()
            .all(|(&protected, up)| rule_permits(protected, up, sender, as_path))
    })
}

/// A Peerlock-lite filter at one provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerlockLiteDeployment {
    pub deployer: Asn,
    pub protected_set: BTreeSet<Asn>,
}

/// Peerlock-lite check: customer-sent updates containing a protected AS are
/// dropped.
pub fn peerlocklite_permits(
    deployments: &BTreeMap<Asn, BTreeSet<Asn>>,
    receiver: Asn,
    sender_relationship: NeighborKind,
    as_path: &[Asn],
) -> bool {
    if sender_relationship != NeighborKind::Customer {
        return true;
    }
    deployments
        .get(&receiver)
        .is_none_or(|protected| !as_path.iter().any(|a| protected.contains(a)))
}

/// True when the path carries a poison sandwich, i.e. it is longer than its
/// unpoisoned form because the origin appears more than once.
pub fn is_poisoned(as_path: &[Asn]) -> bool {
    match as_path.last() {
        Some(origin) => as_path.iter().filter(|a| *a == origin).count() > 1,
        None => false,
    }
}

/// Which import predicate rejected an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    LoopDetection,
    Peerlock,
    PeerlockLite,
    PoisonFilter,
}

impl DropReason {
    pub const ALL: [DropReason; 4] = [
        DropReason::LoopDetection,
        DropReason::Peerlock,
        DropReason::PeerlockLite,
        DropReason::PoisonFilter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropReason::LoopDetection => "loop_detection",
            DropReason::Peerlock => "peerlock",
            DropReason::PeerlockLite => "peerlock_lite",
            DropReason::PoisonFilter => "poison_filter",
        }
    }

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

/// Import predicate consulted by the engine after loop detection.
pub trait ImportFilter: Sync {
    /// `receiver` and `sender` are node indices; `sender_kind` is what the
    /// sender is to the receiver.
    fn check(&self, receiver: usize, sender: usize, sender_kind: NeighborKind, as_path: &[Asn]) -> Option<DropReason>;
}

/// Accepts everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoFilter;

impl ImportFilter for NoFilter {
    fn check(&self, _: usize, _: usize, _: NeighborKind, _: &[Asn]) -> Option<DropReason> {
        None
    }
}

/// The seven protection scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioName {
    None,
    Inferred,
    FullT1,
    FullT1LispLock,
    FullT1LispLite,
    FullT1LispBoth,
    InferredLispLite,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        ScenarioName::None,
        ScenarioName::Inferred,
        ScenarioName::FullT1,
        ScenarioName::FullT1LispLock,
        ScenarioName::FullT1LispLite,
        ScenarioName::FullT1LispBoth,
        ScenarioName::InferredLispLite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::None => "none",
            ScenarioName::Inferred => "inferred",
            ScenarioName::FullT1 => "full-t1",
            ScenarioName::FullT1LispLock => "full-t1-lisp-lock",
            ScenarioName::FullT1LispLite => "full-t1-lisp-lite",
            ScenarioName::FullT1LispBoth => "full-t1-lisp-both",
            ScenarioName::InferredLispLite => "inferred-lisp-lite",
        }
    }

    pub fn needs_rules(self) -> bool {
        matches!(self, ScenarioName::Inferred | ScenarioName::InferredLispLite)
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Complete filter configuration for one simulation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProtectionScenario {
    pub name: String,
    pub peerlock_rules: PeerlockRules,
    /// Peerlock-lite deployer -> protected set.
    pub lite_deployments: BTreeMap<Asn, BTreeSet<Asn>>,
    /// ASes dropping every poisoned update. Only used by measurement emulation.
    pub poison_filterers: BTreeSet<Asn>,
}

impl ProtectionScenario {
    pub fn empty(name: impl Into<String>) -> Self {
        ProtectionScenario {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_rule(&mut self, rule: PeerlockRule) -> Result<()> {
        self.peerlock_rules.insert(rule)
    }

    pub fn add_lite(&mut self, deployment: PeerlockLiteDeployment) {
        self.lite_deployments
            .entry(deployment.deployer)
            .or_default()
            .extend(deployment.protected_set);
    }

    pub fn lite_count(&self) -> usize {
        self.lite_deployments.len()
    }

    /// Every ASN named anywhere in the scenario.
    pub fn mentioned_asns(&self) -> BTreeSet<Asn> {
        let mut out = BTreeSet::new();
        for r in self.peerlock_rules.iter() {
            out.insert(r.protector);
            out.insert(r.protected);
            out.extend(r.authorized_upstreams);
        }
        for (d, set) in &self.lite_deployments {
            out.insert(*d);
            out.extend(set);
        }
        out.extend(&self.poison_filterers);
        out
    }

    /// Combined import predicate for this scenario over `topology`.
    ///
    /// Evaluation order is Peerlock, Peerlock-lite, poison filtering; the
    /// engine runs loop detection before any of them.
    pub fn check(&self, receiver: Asn, sender: Asn, sender_kind: NeighborKind, as_path: &[Asn]) -> Option<DropReason> {
        if !peerlock_permits(&self.peerlock_rules, receiver, sender, as_path) {
            Some(DropReason::Peerlock)
        } else if !peerlocklite_permits(&self.lite_deployments, receiver, sender_kind, as_path) {
            Some(DropReason::PeerlockLite)
        } else if self.poison_filterers.contains(&receiver) && is_poisoned(as_path) {
            Some(DropReason::PoisonFilter)
        } else {
            None
        }
    }

    /// Indexes the scenario by node for use inside the engine.
    pub fn compile<'a>(&'a self, topology: &'a AsTopology) -> CompiledScenario<'a> {
        CompiledScenario {
            scenario: self,
            topology,
            filtering: topology
                .asns()
                .iter()
                .map(|a| {
                    self.peerlock_rules.for_protector(*a).is_some()
                        || self.lite_deployments.contains_key(a)
                        || self.poison_filterers.contains(a)
                })
                .collect(),
        }
    }
}

/// A scenario bound to a topology.
#[derive(Debug, Clone)]
pub struct CompiledScenario<'a> {
    scenario: &'a ProtectionScenario,
    topology: &'a AsTopology,
    filtering: Vec<bool>,
}

impl ImportFilter for CompiledScenario<'_> {
    fn check(&self, receiver: usize, sender: usize, sender_kind: NeighborKind, as_path: &[Asn]) -> Option<DropReason> {
        if !self.filtering[receiver] {
            return None;
        }
        self.scenario.check(
            self.topology.asn(receiver),
            self.topology.asn(sender),
            sender_kind,
            as_path,
        )
    }
}

/// Parses a rule file: one `protector protected` pair per line, `#` comments.
pub fn parse_rule_file(text: &str) -> Result<Vec<PeerlockRule>> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                i + 1,
                format!("expected `protector protected`, found {} fields", fields.len()),
            ));
        }
        let parse = |s: &str| {
            s.parse::<Asn>()
                .map_err(|_| Error::parse(i + 1, format!("invalid ASN {s:?}")))
        };
        let rule = PeerlockRule::new(parse(fields[0])?, parse(fields[1])?);
        if rule.protector == rule.protected {
            return Err(Error::parse(i + 1, "protector and protected are the same AS"));
        }
        rules.push(rule);
    }
    Ok(rules)
}

/// Builds one of the named protection scenarios.
///
/// Simulation scenarios use empty authorized-upstream sets: protectors accept
/// routes through a protected AS only directly from it.
pub fn build_scenario(
    name: ScenarioName,
    topology: &AsTopology,
    inferred_rules: Option<&[PeerlockRule]>,
) -> Result<ProtectionScenario> {
    let mut scenario = ProtectionScenario::empty(name.as_str());
    let clique = topology.clique();

    if name.needs_rules() {
        let rules = inferred_rules.ok_or(Error::MissingRules(name))?;
        for rule in rules {
            scenario.add_rule(rule.clone())?;
        }
    }

    let full_t1 = matches!(
        name,
        ScenarioName::FullT1
            | ScenarioName::FullT1LispLock
            | ScenarioName::FullT1LispLite
            | ScenarioName::FullT1LispBoth
    );
    if full_t1 {
        for &a in clique {
            for &b in clique {
                if a != b {
                    scenario.add_rule(PeerlockRule::new(a, b))?;
                }
            }
        }
    }

    let lisp_lock = matches!(name, ScenarioName::FullT1LispLock | ScenarioName::FullT1LispBoth);
    let lisp_lite = matches!(
        name,
        ScenarioName::FullT1LispLite | ScenarioName::FullT1LispBoth | ScenarioName::InferredLispLite
    );
    if lisp_lock || lisp_lite {
        for (node, &asn) in topology.asns().iter().enumerate() {
            if topology.class_of(node) != UclaClass::LargeIsp {
                continue;
            }
            if lisp_lock {
                for n in topology.neighbors(node) {
                    let peer = topology.asn(n.node as usize);
                    if n.kind == NeighborKind::Peer && clique.contains(&peer) {
                        scenario.add_rule(PeerlockRule::new(asn, peer))?;
                    }
                }
            }
            if lisp_lite {
                scenario.add_lite(PeerlockLiteDeployment {
                    deployer: asn,
                    protected_set: clique.clone(),
                });
            }
        }
    }
    Ok(scenario)
}
