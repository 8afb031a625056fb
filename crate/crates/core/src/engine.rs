// SPDX-License-Identifier: Apache-2.0

//! Single-prefix BGP propagation over an [`AsTopology`].
//!
//! Every AS keeps one candidate per neighbor (the neighbor's latest
//! announcement) and selects a best route by relationship, then AS-path
//! length, then lowest neighbor ASN. Exports follow the valley-free rules.
//! An update rejected on import replaces (withdraws) the previous candidate
//! from the same neighbor.
//!
//! Work is scheduled through a FIFO of ASes whose best route changed; an AS
//! taken off the queue re-announces to every eligible neighbor in ascending
//! ASN order and withdraws from the others. Runs are fully deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::filters::{DropReason, ImportFilter};
use crate::topology::{AsTopology, NeighborKind};
use crate::types::{Asn, PrefixId};

/// Which measurement phase (if any) an announcement belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum PhaseTag {
    Unpoisoned,
    Control,
    Leak,
    #[default]
    Plain,
}

/// A route advertisement. `as_path[0]` is the most recent exporter and the
/// last element is the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Announcement {
    pub prefix: PrefixId,
    pub as_path: Arc<[Asn]>,
    pub leak_provenance: bool,
    pub phase: PhaseTag,
}

/// A candidate route at one AS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RibEntry {
    pub route: Announcement,
    pub learned_from: Asn,
    pub learned_relationship: NeighborKind,
}

impl RibEntry {
    /// Lexicographic preference key; smaller is better.
    pub fn preference_key(&self) -> (u8, usize, Asn) {
        (
            self.learned_relationship.rank(),
            self.route.as_path.len(),
            self.learned_from,
        )
    }
}

/// Selects the best candidate: customer before peer before provider, then
/// shortest AS path, then lowest neighbor ASN.
pub fn decide<'a>(candidates: impl IntoIterator<Item = &'a RibEntry>) -> Option<&'a RibEntry> {
    candidates.into_iter().min_by_key(|c| c.preference_key())
}

/// BGP loop detection: accept unless `local` already appears on the path.
pub fn loop_check(as_path: &[Asn], local: Asn) -> bool {
    !as_path.contains(&local)
}

/// AS path of an origination poisoning each of `poisons`:
/// `[origin, p1, origin, p2, origin, ...]`.
pub fn poisoned_path(origin: Asn, poisons: &[Asn]) -> Vec<Asn> {
    let mut path = Vec::with_capacity(1 + 2 * poisons.len());
    path.push(origin);
    for &p in poisons {
        path.push(p);
        path.push(origin);
    }
    path
}

/// Where an AS's best route came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteSource {
    Originated,
    Learned { from: Asn, relationship: NeighborKind },
}

/// Neighbors that receive an AS's best route under valley-free export.
///
/// Customer-learned and self-originated routes go to every neighbor; peer-
/// and provider-learned routes go to customers only. The neighbor the route
/// was learned from is never a target.
pub fn export_targets(source: RouteSource, local: Asn, topology: &AsTopology) -> Result<BTreeSet<Asn>> {
    let node = topology.require(local)?;
    Ok(topology
        .neighbors(node)
        .iter()
        .filter(|n| eligible(source, topology.asn(n.node as usize), n.kind, false))
        .map(|n| topology.asn(n.node as usize))
        .collect())
}

fn eligible(source: RouteSource, neighbor: Asn, neighbor_kind: NeighborKind, leaking: bool) -> bool {
    match source {
        RouteSource::Originated => true,
        RouteSource::Learned { from, relationship } => {
            from != neighbor
                && (leaking || relationship == NeighborKind::Customer || neighbor_kind == NeighborKind::Customer)
        }
    }
}

/// Per-AS count of rejected updates by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts([u32; 4]);

impl DropCounts {
    pub fn get(&self, reason: DropReason) -> u32 {
        self.0[reason.slot()]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub(crate) fn add(&mut self, reason: DropReason) {
        self.0[reason.slot()] += 1;
    }

    pub fn from_counts(counts: [u32; 4]) -> Self {
        DropCounts(counts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Best {
    Origin,
    /// Receiver-side edge index holding the selected candidate.
    Edge(usize),
}

/// Routing state for one prefix over a shared topology.
#[derive(Debug, Clone)]
pub struct RoutingState<'t> {
    topology: &'t AsTopology,
    prefix: PrefixId,
    phase: PhaseTag,
    // candidate from neighbor `adjacency[e].node`, held at the receiver side of edge `e`
    slots: Vec<Option<Announcement>>,
    best: Vec<Option<Best>>,
    origin: Option<(usize, Announcement)>,
    leaker: Option<usize>,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    drops: Vec<DropCounts>,
    leak_received: Vec<bool>,
    // sent at least one announcement, leak or not
    heard: Vec<bool>,
    round_limit: usize,
    rounds: usize,
}

impl<'t> RoutingState<'t> {
    pub fn new(topology: &'t AsTopology, prefix: PrefixId, phase: PhaseTag) -> Self {
        let n = topology.len();
        let edges = topology.neighbors_total();
        RoutingState {
            topology,
            prefix,
            phase,
            slots: vec![None; edges],
            best: vec![None; n],
            origin: None,
            leaker: None,
            queue: VecDeque::new(),
            queued: vec![false; n],
            drops: vec![DropCounts::default(); n],
            leak_received: vec![false; n],
            heard: vec![false; n],
            round_limit: 10 * n.max(1),
            rounds: 0,
        }
    }

    /// Overrides the divergence bound (default `10 * |nodes|` rounds).
    pub fn with_round_limit(mut self, rounds: usize) -> Self {
        self.round_limit = rounds;
        self
    }

    pub fn topology(&self) -> &'t AsTopology {
        self.topology
    }

    /// Installs the origin's self-route and schedules its exports. Poisoned
    /// ASNs are sandwiched between copies of the origin.
    pub fn originate(&mut self, origin: Asn, poisons: &[Asn]) -> Result<()> {
        let node = self.topology.require(origin)?;
        let route = Announcement {
            prefix: self.prefix,
            as_path: poisoned_path(origin, poisons).into(),
            leak_provenance: false,
            phase: self.phase,
        };
        self.origin = Some((node, route));
        self.best[node] = Some(Best::Origin);
        self.schedule(node);
        Ok(())
    }

    /// Turns `leaker` into a Type-1 leaker: it re-exports its current best
    /// route to all peers and providers, tagged with leak provenance. Drop
    /// and receipt accounting restarts at this point.
    pub fn inject_leak(&mut self, leaker: Asn) -> Result<()> {
        let node = self.topology.require(leaker)?;
        match self.best[node] {
            Some(Best::Edge(_)) => {}
            _ => return Err(Error::NoRoute(leaker)),
        }
        self.leaker = Some(node);
        self.drops.iter_mut().for_each(|d| *d = DropCounts::default());
        self.leak_received.iter_mut().for_each(|r| *r = false);
        self.heard.iter_mut().for_each(|r| *r = false);
        self.schedule(node);
        Ok(())
    }

    /// Processes scheduled exports until no best route changes.
    pub fn converge<F: ImportFilter + ?Sized>(&mut self, filter: &F) -> Result<usize> {
        let mut rounds = 0;
        while !self.queue.is_empty() {
            rounds += 1;
            if rounds > self.round_limit {
                return Err(Error::Divergence(self.round_limit));
            }
            for _ in 0..self.queue.len() {
                let node = self.queue.pop_front().expect("queue length checked");
                self.queued[node] = false;
                self.export_from(node, filter);
            }
        }
        self.rounds += rounds;
        Ok(rounds)
    }

    /// Total rounds processed over all `converge` calls.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    fn schedule(&mut self, node: usize) {
        if !self.queued[node] {
            self.queued[node] = true;
            self.queue.push_back(node);
        }
    }

    fn source_of(&self, node: usize) -> Option<RouteSource> {
        Some(match self.best[node]? {
            Best::Origin => RouteSource::Originated,
            Best::Edge(e) => {
                let n = self.topology.edge(e);
                RouteSource::Learned {
                    from: self.topology.asn(n.node as usize),
                    relationship: n.kind,
                }
            }
        })
    }

    fn best_route(&self, node: usize) -> Option<&Announcement> {
        match self.best[node]? {
            Best::Origin => self.origin.as_ref().map(|(_, r)| r),
            Best::Edge(e) => self.slots[e].as_ref(),
        }
    }

    /// Path this AS announces to its neighbors.
    fn export_path(&self, node: usize) -> Option<Arc<[Asn]>> {
        match self.best[node]? {
            Best::Origin => self.origin.as_ref().map(|(_, r)| r.as_path.clone()),
            Best::Edge(e) => {
                let received = &self.slots[e].as_ref()?.as_path;
                let mut path = Vec::with_capacity(received.len() + 1);
                path.push(self.topology.asn(node));
                path.extend_from_slice(received);
                Some(path.into())
            }
        }
    }

    fn export_from<F: ImportFilter + ?Sized>(&mut self, node: usize, filter: &F) {
        let topo = self.topology;
        let source = self.source_of(node);
        let leaking = self.leaker == Some(node);
        let path = self.export_path(node);
        let base_leak = self.best_route(node).is_some_and(|r| r.leak_provenance);

        for e in topo.edge_range(node) {
            let n = topo.edge(e);
            let target = n.node as usize;
            let slot = topo.reverse_edge(e);
            let msg = match (source, &path) {
                (Some(src), Some(path)) if eligible(src, topo.asn(target), n.kind, leaking) => Some(Announcement {
                    prefix: self.prefix,
                    as_path: path.clone(),
                    leak_provenance: base_leak || (leaking && n.kind != NeighborKind::Customer),
                    phase: self.phase,
                }),
                _ => None,
            };
            self.deliver(target, slot, msg, filter);
        }
    }

    fn deliver<F: ImportFilter + ?Sized>(
        &mut self,
        receiver: usize,
        slot: usize,
        msg: Option<Announcement>,
        filter: &F,
    ) {
        let holds_best = self.best[receiver] == Some(Best::Edge(slot));
        let Some(ann) = msg else {
            if self.slots[slot].take().is_some() && holds_best {
                self.reselect(receiver);
            }
            return;
        };

        self.heard[receiver] = true;
        if ann.leak_provenance {
            self.leak_received[receiver] = true;
        }
        let sender = self.topology.edge(slot);
        let local = self.topology.asn(receiver);
        let verdict = if !loop_check(&ann.as_path, local) {
            Some(DropReason::LoopDetection)
        } else {
            filter.check(receiver, sender.node as usize, sender.kind, &ann.as_path)
        };

        if let Some(reason) = verdict {
            self.drops[receiver].add(reason);
            if self.slots[slot].take().is_some() && holds_best {
                self.reselect(receiver);
            }
            return;
        }

        if self.slots[slot].as_ref() == Some(&ann) {
            return;
        }
        self.slots[slot] = Some(ann);
        if holds_best {
            self.reselect(receiver);
        } else if self.better_than_best(receiver, slot) {
            self.best[receiver] = Some(Best::Edge(slot));
            self.schedule(receiver);
        }
    }

    fn slot_key(&self, slot: usize) -> Option<(u8, usize, usize)> {
        let route = self.slots[slot].as_ref()?;
        Some((self.topology.edge(slot).kind.rank(), route.as_path.len(), slot))
    }

    fn better_than_best(&self, receiver: usize, slot: usize) -> bool {
        match self.best[receiver] {
            None => true,
            Some(Best::Origin) => false,
            Some(Best::Edge(cur)) => self.slot_key(slot) < self.slot_key(cur),
        }
    }

    fn reselect(&mut self, node: usize) {
        if self.best[node] != Some(Best::Origin) {
            // slots of one node are ordered by neighbor ASN, so the slot index
            // breaks ties exactly like the neighbor ASN does
            self.best[node] = self
                .topology
                .edge_range(node)
                .filter_map(|e| self.slot_key(e))
                .min()
                .map(|(_, _, e)| Best::Edge(e));
        }
        self.schedule(node);
    }

    /// True once no exports are pending.
    pub fn is_converged(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn prefix(&self) -> PrefixId {
        self.prefix
    }

    pub fn phase(&self) -> PhaseTag {
        self.phase
    }

    pub fn origin(&self) -> Option<Asn> {
        self.origin.as_ref().map(|(n, _)| self.topology.asn(*n))
    }

    pub fn leaker(&self) -> Option<Asn> {
        self.leaker.map(|n| self.topology.asn(n))
    }

    fn entry(&self, slot: usize) -> Option<RibEntry> {
        let n = self.topology.edge(slot);
        Some(RibEntry {
            route: self.slots[slot].clone()?,
            learned_from: self.topology.asn(n.node as usize),
            learned_relationship: n.kind,
        })
    }

    /// Best learned route at `asn`; `None` for the origin and for ASes
    /// without a route.
    pub fn best_entry(&self, asn: Asn) -> Option<RibEntry> {
        let node = self.topology.node(asn)?;
        match self.best[node]? {
            Best::Origin => None,
            Best::Edge(e) => self.entry(e),
        }
    }

    /// All current candidates at `asn`, in neighbor ASN order.
    pub fn candidates(&self, asn: Asn) -> Vec<RibEntry> {
        let Some(node) = self.topology.node(asn) else {
            return Vec::new();
        };
        self.topology.edge_range(node).filter_map(|e| self.entry(e)).collect()
    }

    pub fn has_route(&self, asn: Asn) -> bool {
        self.topology.node(asn).is_some_and(|n| self.best[n].is_some())
    }

    /// Installed path as seen from `asn`: the AS itself followed by the
    /// received path. For the origin this is its self-route.
    pub fn installed_path(&self, asn: Asn) -> Option<Vec<Asn>> {
        let node = self.topology.node(asn)?;
        self.export_path(node).map(|p| p.to_vec())
    }

    /// Whether the best route at `asn` carries leak provenance.
    pub fn is_leak_installed(&self, asn: Asn) -> bool {
        self.topology
            .node(asn)
            .and_then(|n| self.best_route(n))
            .is_some_and(|r| r.leak_provenance)
    }

    /// ASes whose best route carries leak provenance.
    pub fn leak_installed(&self) -> BTreeSet<Asn> {
        (0..self.topology.len())
            .filter(|&n| self.best_route(n).is_some_and(|r| r.leak_provenance))
            .map(|n| self.topology.asn(n))
            .collect()
    }

    /// ASes that were sent at least one leak-provenance update since the
    /// leak was injected, whether or not they accepted it.
    pub fn leak_received(&self) -> BTreeSet<Asn> {
        (0..self.topology.len())
            .filter(|&n| self.leak_received[n])
            .map(|n| self.topology.asn(n))
            .collect()
    }

    /// ASes that were sent at least one announcement since origination (or
    /// since the leak was injected).
    pub fn heard(&self) -> BTreeSet<Asn> {
        (0..self.topology.len())
            .filter(|&n| self.heard[n])
            .map(|n| self.topology.asn(n))
            .collect()
    }

    /// Rejected updates per AS (only ASes with at least one drop).
    pub fn drop_log(&self) -> BTreeMap<Asn, DropCounts> {
        (0..self.topology.len())
            .filter(|&n| self.drops[n].total() > 0)
            .map(|n| (self.topology.asn(n), self.drops[n]))
            .collect()
    }

    /// At the current state, the leak-provenance path each AS announces to
    /// at least one neighbor, as `(exporter, path)` in exporter ASN order.
    pub fn exported_leak_paths(&self) -> Vec<(Asn, Vec<Asn>)> {
        let topo = self.topology;
        let mut out = Vec::new();
        for node in 0..topo.len() {
            let Some(source) = self.source_of(node) else {
                continue;
            };
            let leaking = self.leaker == Some(node);
            let base_leak = self.best_route(node).is_some_and(|r| r.leak_provenance);
            if !leaking && !base_leak {
                continue;
            }
            let exports = topo.neighbors(node).iter().any(|n| {
                eligible(source, topo.asn(n.node as usize), n.kind, leaking)
                    && (base_leak || n.kind != NeighborKind::Customer)
            });
            if exports {
                let path = self.export_path(node).expect("node has a best route");
                out.push((topo.asn(node), path.to_vec()));
            }
        }
        out
    }

    /// Installed path per AS, for comparing complete states.
    pub fn snapshot(&self) -> Vec<(Asn, Option<Vec<Asn>>, bool)> {
        self.topology
            .asns()
            .iter()
            .map(|&a| (a, self.installed_path(a), self.is_leak_installed(a)))
            .collect()
    }
}
