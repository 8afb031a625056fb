// SPDX-License-Identifier: Apache-2.0

//! Control-plane measurement emulation and filter inference.
//!
//! A measurement announces one prefix three times from the same origin:
//! unpoisoned, poisoned with a sentinel ASN (control), and poisoned with the
//! target ASN (leak). Paths seen at collectors in the control phase form the
//! control DAG; ASes seen in the leak phase form the leak set. Filterers are
//! inferred from what disappears between the two.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::engine::{DropCounts, PhaseTag, RoutingState};
use crate::error::{Error, Result};
use crate::filters::{DropReason, ProtectionScenario};
use crate::topology::AsTopology;
use crate::types::{Asn, PrefixId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Unpoisoned,
    Control,
    Leak,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Unpoisoned, Phase::Control, Phase::Leak];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Unpoisoned => "unpoisoned",
            Phase::Control => "control",
            Phase::Leak => "leak",
        }
    }

    fn tag(self) -> PhaseTag {
        match self {
            Phase::Unpoisoned => PhaseTag::Unpoisoned,
            Phase::Control => PhaseTag::Control,
            Phase::Leak => PhaseTag::Leak,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Format(format!("unknown phase {s:?}")))
    }
}

/// A best path observed at a collector; `as_path[0]` is the collector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObservedUpdate {
    pub phase: Phase,
    pub collector: Asn,
    pub as_path: Vec<Asn>,
}

/// The propagating part of a path: everything up to the first occurrence
/// of the origin (the last ASN). Poisoned ASNs behind it are dropped.
pub fn strip_poisons(as_path: &[Asn]) -> &[Asn] {
    match as_path.last() {
        Some(origin) => {
            let first = as_path.iter().position(|a| a == origin).expect("origin is on the path");
            &as_path[..=first]
        }
        None => as_path,
    }
}

/// Per-AS ground truth of one phase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhaseTruth {
    /// ASes sent at least one update.
    pub heard: BTreeSet<Asn>,
    pub drops: BTreeMap<Asn, DropCounts>,
}

impl PhaseTruth {
    /// ASes with at least one drop for any reason.
    pub fn droppers(&self) -> BTreeSet<Asn> {
        self.drops.keys().copied().collect()
    }

    pub fn droppers_for(&self, reason: DropReason) -> BTreeSet<Asn> {
        self.drops
            .iter()
            .filter(|(_, c)| c.get(reason) > 0)
            .map(|(&a, _)| a)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emulation {
    pub origin: Asn,
    pub target: Asn,
    pub sentinel: Asn,
    pub updates: Vec<ObservedUpdate>,
    pub truth: BTreeMap<Phase, PhaseTruth>,
}

impl Emulation {
    pub fn phase_updates(&self, phase: Phase) -> impl Iterator<Item = &ObservedUpdate> {
        self.updates.iter().filter(move |u| u.phase == phase)
    }
}

/// Runs the three measurement phases under `scenario` and records the best
/// path of every collector in each phase.
pub fn emulate_measurement(
    topology: &AsTopology,
    scenario: &ProtectionScenario,
    origin: Asn,
    target: Asn,
    collectors: &BTreeSet<Asn>,
    sentinel: Asn,
) -> Result<Emulation> {
    if topology.contains(sentinel) || scenario.mentioned_asns().contains(&sentinel) {
        return Err(Error::InvalidSentinel(sentinel));
    }
    for &a in [origin, target].iter().chain(collectors) {
        if !topology.contains(a) {
            return Err(Error::UnknownAs(a));
        }
    }
    let filter = scenario.compile(topology);
    let mut updates = Vec::new();
    let mut truth = BTreeMap::new();
    for phase in Phase::ALL {
        let poisons: &[Asn] = match phase {
            Phase::Unpoisoned => &[],
            Phase::Control => &[sentinel],
            Phase::Leak => &[target],
        };
        let mut state = RoutingState::new(topology, PrefixId(1), phase.tag());
        state.originate(origin, poisons)?;
        state.converge(&filter)?;
        for &collector in collectors {
            if let Some(as_path) = state.installed_path(collector) {
                updates.push(ObservedUpdate {
                    phase,
                    collector,
                    as_path,
                });
            }
        }
        truth.insert(
            phase,
            PhaseTruth {
                heard: state.heard(),
                drops: state.drop_log(),
            },
        );
    }
    Ok(Emulation {
        origin,
        target,
        sentinel,
        updates,
        truth,
    })
}

/// Propagation graph reconstructed from observed paths. Edges point from
/// the exporter (nearer the origin) to the receiver.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControlDag {
    pub nodes: BTreeSet<Asn>,
    pub edges: BTreeSet<(Asn, Asn)>,
}

pub fn build_control_dag<'a>(updates: impl IntoIterator<Item = &'a ObservedUpdate>) -> ControlDag {
    let mut dag = ControlDag::default();
    for u in updates {
        let path = strip_poisons(&u.as_path);
        dag.nodes.extend(path.iter().copied());
        dag.edges.extend(path.windows(2).map(|w| (w[1], w[0])));
    }
    dag
}

/// ASes on any of the given paths, poisons excluded.
pub fn propagators<'a>(updates: impl IntoIterator<Item = &'a ObservedUpdate>) -> BTreeSet<Asn> {
    updates
        .into_iter()
        .flat_map(|u| strip_poisons(&u.as_path).iter().copied())
        .collect()
}

/// Nodes of `nodes` without an incoming edge from another member. These are
/// exactly the sources of every weakly connected component of the induced
/// subgraph.
fn sources(nodes: &BTreeSet<Asn>, edges: &BTreeSet<(Asn, Asn)>) -> BTreeSet<Asn> {
    let fed: BTreeSet<Asn> = edges
        .iter()
        .filter(|(from, to)| nodes.contains(from) && nodes.contains(to))
        .map(|&(_, to)| to)
        .collect();
    nodes.difference(&fed).copied().collect()
}

/// BFS depth of every DAG node from the DAG's own sources.
fn depths(dag: &ControlDag) -> BTreeMap<Asn, usize> {
    let mut out: BTreeMap<Asn, usize> = BTreeMap::new();
    let mut queue: VecDeque<Asn> = sources(&dag.nodes, &dag.edges).into_iter().collect();
    for &s in &queue {
        out.insert(s, 0);
    }
    let mut succ: BTreeMap<Asn, Vec<Asn>> = BTreeMap::new();
    for &(from, to) in &dag.edges {
        succ.entry(from).or_default().push(to);
    }
    while let Some(a) = queue.pop_front() {
        let d = out[&a];
        for &b in succ.get(&a).map(Vec::as_slice).unwrap_or(&[]) {
            if let std::collections::btree_map::Entry::Vacant(e) = out.entry(b) {
                e.insert(d + 1);
                queue.push_back(b);
            }
        }
    }
    out
}

/// The DAG plus every topology link between two DAG nodes, oriented from the
/// shallower node to the deeper one (lower ASN first on equal depth).
pub fn augment(dag: &ControlDag, topology: &AsTopology) -> ControlDag {
    let depth = depths(dag);
    let mut out = dag.clone();
    for &a in &dag.nodes {
        let Some(node) = topology.node(a) else {
            continue;
        };
        for n in topology.neighbors(node) {
            let b = topology.asn(n.node as usize);
            if !dag.nodes.contains(&b) || dag.edges.contains(&(a, b)) || dag.edges.contains(&(b, a)) {
                continue;
            }
            if (depth.get(&a), a) < (depth.get(&b), b) {
                out.edges.insert((a, b));
            }
        }
    }
    out
}

/// Nested filterer estimates for one comparison of two phases.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InferenceSets {
    pub max: BTreeSet<Asn>,
    pub min: BTreeSet<Asn>,
    pub likely: BTreeSet<Asn>,
}

fn infer_sets(dag: &ControlDag, propagating: &BTreeSet<Asn>, topology: &AsTopology) -> InferenceSets {
    let max: BTreeSet<Asn> = dag.nodes.difference(propagating).copied().collect();
    let min = sources(&max, &dag.edges);
    // a non-propagator with a propagating in-neighbor, observed or only
    // known from the topology, could have heard the update
    let exposed: BTreeSet<Asn> = augment(dag, topology)
        .edges
        .iter()
        .filter(|(from, to)| propagating.contains(from) && max.contains(to))
        .map(|&(_, to)| to)
        .collect();
    let likely = min.union(&exposed).copied().collect();
    InferenceSets { max, min, likely }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InferenceReport {
    pub leak_set: BTreeSet<Asn>,
    pub max_set: BTreeSet<Asn>,
    pub min_set: BTreeSet<Asn>,
    pub likely_set: BTreeSet<Asn>,
    pub clique_protectors: BTreeSet<Asn>,
    pub poison_min: BTreeSet<Asn>,
    pub poison_max: BTreeSet<Asn>,
    pub poison_likely: BTreeSet<Asn>,
}

impl InferenceReport {
    /// Named sets in output order.
    pub fn sets(&self) -> [(&'static str, &BTreeSet<Asn>); 8] {
        [
            ("leak", &self.leak_set),
            ("min", &self.min_set),
            ("likely", &self.likely_set),
            ("max", &self.max_set),
            ("clique", &self.clique_protectors),
            ("poison_min", &self.poison_min),
            ("poison_likely", &self.poison_likely),
            ("poison_max", &self.poison_max),
        ]
    }

    /// Drops every AS a later run saw propagating the same target's leak.
    pub fn reconcile(&mut self, later: &InferenceReport) {
        for set in [
            &mut self.max_set,
            &mut self.min_set,
            &mut self.likely_set,
            &mut self.clique_protectors,
        ] {
            set.retain(|a| !later.leak_set.contains(a));
        }
        self.leak_set.extend(later.leak_set.iter().copied());
    }

    /// Folds repeated runs for one target into a single report.
    pub fn merge_runs(runs: impl IntoIterator<Item = InferenceReport>) -> InferenceReport {
        let mut runs = runs.into_iter();
        let Some(mut merged) = runs.next() else {
            return InferenceReport::default();
        };
        for later in runs {
            merged.reconcile(&later);
        }
        merged
    }
}

/// Leak-versus-control inference. The clique rule flags every clique member
/// seen in the control DAG but not in the leak set.
pub fn compute_inference<'a>(
    dag: &ControlDag,
    leak_updates: impl IntoIterator<Item = &'a ObservedUpdate>,
    topology: &AsTopology,
    clique: &BTreeSet<Asn>,
) -> InferenceReport {
    let leak_set = propagators(leak_updates);
    let sets = infer_sets(dag, &leak_set, topology);
    let clique_protectors = clique.intersection(&sets.max).copied().collect();
    InferenceReport {
        leak_set,
        max_set: sets.max,
        min_set: sets.min,
        likely_set: sets.likely,
        clique_protectors,
        ..InferenceReport::default()
    }
}

/// Same procedure with the unpoisoned DAG against control propagators.
pub fn compute_poison_sets<'a>(
    unpoisoned: impl IntoIterator<Item = &'a ObservedUpdate>,
    control: impl IntoIterator<Item = &'a ObservedUpdate>,
    topology: &AsTopology,
) -> InferenceSets {
    let dag = build_control_dag(unpoisoned);
    infer_sets(&dag, &propagators(control), topology)
}

/// Full inference from one set of observations.
pub fn infer(updates: &[ObservedUpdate], topology: &AsTopology) -> InferenceReport {
    let of = |phase: Phase| updates.iter().filter(move |u| u.phase == phase);
    let dag = build_control_dag(of(Phase::Control));
    let mut report = compute_inference(&dag, of(Phase::Leak), topology, topology.clique());
    let poison = compute_poison_sets(of(Phase::Unpoisoned), of(Phase::Control), topology);
    report.poison_min = poison.min;
    report.poison_max = poison.max;
    report.poison_likely = poison.likely;
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetScore {
    pub set: &'static str,
    /// 1.0 for an empty set.
    pub precision: f64,
    /// 1.0 when there is nothing to find.
    pub recall: f64,
    pub size: usize,
    pub true_positives: usize,
    pub truth_size: usize,
}

pub fn score_set(set: &'static str, inferred: &BTreeSet<Asn>, truth: &BTreeSet<Asn>) -> SetScore {
    let tp = inferred.intersection(truth).count();
    SetScore {
        set,
        precision: if inferred.is_empty() {
            1.0
        } else {
            tp as f64 / inferred.len() as f64
        },
        recall: if truth.is_empty() {
            1.0
        } else {
            tp as f64 / truth.len() as f64
        },
        size: inferred.len(),
        true_positives: tp,
        truth_size: truth.len(),
    }
}

/// True filterers of the leak phase: ASes with any drop, the origin aside.
pub fn true_filterers(emulation: &Emulation) -> BTreeSet<Asn> {
    let mut truth = emulation
        .truth
        .get(&Phase::Leak)
        .map(PhaseTruth::droppers)
        .unwrap_or_default();
    truth.remove(&emulation.origin);
    truth
}

/// Scores the min, likely, max and clique sets against `truth`; the clique
/// set is scored against clique members of `truth` only.
pub fn score_inference(report: &InferenceReport, truth: &BTreeSet<Asn>, clique: &BTreeSet<Asn>) -> Vec<SetScore> {
    let clique_truth: BTreeSet<Asn> = truth.intersection(clique).copied().collect();
    vec![
        score_set("min", &report.min_set, truth),
        score_set("likely", &report.likely_set, truth),
        score_set("max", &report.max_set, truth),
        score_set("clique", &report.clique_protectors, &clique_truth),
    ]
}
