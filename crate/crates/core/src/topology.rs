// SPDX-License-Identifier: Apache-2.0

//! AS-level relationship graph.
//!
//! [`RelationshipGraph`] is the raw link set read from a CAIDA serial-2 file.
//! [`AsTopology`] is the immutable, resolved form used by the simulator: a
//! compact adjacency list indexed by node, customer cone sizes, UCLA classes
//! and the Tier-1 clique.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::types::Asn;

const CLIQUE_HEADER: &str = "# input clique:";

/// Business relationship carried by a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relationship {
    /// Directional: the first AS is the provider of the second.
    ProviderToCustomer,
    /// Symmetric settlement-free peering.
    PeerToPeer,
}

impl Relationship {
    fn code(self) -> i8 {
        match self {
            Relationship::ProviderToCustomer => -1,
            Relationship::PeerToPeer => 0,
        }
    }
}

/// What a neighbor is to the local AS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NeighborKind {
    Customer,
    Peer,
    Provider,
}

impl NeighborKind {
    /// Preference rank used by the decision process (lower wins).
    pub fn rank(self) -> u8 {
        match self {
            NeighborKind::Customer => 0,
            NeighborKind::Peer => 1,
            NeighborKind::Provider => 2,
        }
    }
}

/// UCLA classification by customer cone size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UclaClass {
    Tier1,
    LargeIsp,
    SmallIsp,
    Stub,
}

impl UclaClass {
    pub const ALL: [UclaClass; 4] = [
        UclaClass::Tier1,
        UclaClass::LargeIsp,
        UclaClass::SmallIsp,
        UclaClass::Stub,
    ];

    /// Single-letter code used in path encodings.
    pub fn code(self) -> char {
        match self {
            UclaClass::Tier1 => 'T',
            UclaClass::LargeIsp => 'L',
            UclaClass::SmallIsp => 'S',
            UclaClass::Stub => 'U',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Some(match c {
            'T' => UclaClass::Tier1,
            'L' => UclaClass::LargeIsp,
            'S' => UclaClass::SmallIsp,
            'U' => UclaClass::Stub,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            UclaClass::Tier1 => "tier1",
            UclaClass::LargeIsp => "large_isp",
            UclaClass::SmallIsp => "small_isp",
            UclaClass::Stub => "stub",
        }
    }

    /// Class of a non-clique AS with `cone_size` customers (self excluded).
    pub fn from_cone_size(cone_size: usize) -> Self {
        if cone_size > 50 {
            UclaClass::LargeIsp
        } else if cone_size >= 5 {
            UclaClass::SmallIsp
        } else {
            UclaClass::Stub
        }
    }
}

/// Link set as read from a relationship file.
///
/// Provider-to-customer links are keyed `(provider, customer)`; peer links are
/// keyed `(lower, higher)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationshipGraph {
    links: BTreeMap<(Asn, Asn), Relationship>,
    nodes: BTreeSet<Asn>,
    clique_header: Option<BTreeSet<Asn>>,
}

impl RelationshipGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses CAIDA serial-2 text (`<asn>|<asn>|<code>` lines).
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut graph = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            graph.parse_line(i + 1, &line)?;
        }
        Ok(graph)
    }

    fn parse_line(&mut self, line_no: usize, line: &str) -> Result<()> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(());
        }
        if let Some(rest) = line.strip_prefix(CLIQUE_HEADER) {
            let mut clique = BTreeSet::new();
            for tok in rest.split_whitespace() {
                let asn = parse_asn(tok).ok_or_else(|| Error::parse(line_no, format!("invalid clique ASN {tok:?}")))?;
                clique.insert(asn);
            }
            self.clique_header = Some(clique);
            return Ok(());
        }
        if line.starts_with('#') {
            return Ok(());
        }

        let fields: Vec<&str> = line.split('|').collect();
        // serial-2 files may carry a fourth "source" column
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 3 '|' separated fields, found {}", fields.len()),
            ));
        }
        let a = parse_asn(fields[0]).ok_or_else(|| Error::parse(line_no, format!("invalid ASN {:?}", fields[0])))?;
        let b = parse_asn(fields[1]).ok_or_else(|| Error::parse(line_no, format!("invalid ASN {:?}", fields[1])))?;
        let rel = match fields[2].trim() {
            "-1" => Relationship::ProviderToCustomer,
            "0" => Relationship::PeerToPeer,
            other => return Err(Error::parse(line_no, format!("unknown relationship code {other:?}"))),
        };
        self.insert_link(a, b, rel).map_err(|msg| Error::parse(line_no, msg))
    }

    /// Adds a link. For [`Relationship::ProviderToCustomer`], `a` is the
    /// provider of `b`.
    pub fn add_link(&mut self, a: Asn, b: Asn, rel: Relationship) -> Result<()> {
        self.insert_link(a, b, rel).map_err(|msg| Error::parse(0, msg))
    }

    fn insert_link(&mut self, a: Asn, b: Asn, rel: Relationship) -> Result<(), String> {
        if a == b {
            return Err(format!("self link on AS {a}"));
        }
        let key = match rel {
            Relationship::ProviderToCustomer => (a, b),
            Relationship::PeerToPeer => (a.min(b), a.max(b)),
        };
        let reverse = (key.1, key.0);
        let existing = self
            .links
            .get(&key)
            .map(|r| (key, *r))
            .or_else(|| self.links.get(&reverse).map(|r| (reverse, *r)));
        match existing {
            Some((k, r)) if k == key && r == rel => Ok(()),
            Some(_) => Err(format!("conflicting relationship for AS pair {a}-{b}")),
            None => {
                self.links.insert(key, rel);
                self.nodes.insert(a);
                self.nodes.insert(b);
                Ok(())
            }
        }
    }

    pub fn nodes(&self) -> &BTreeSet<Asn> {
        &self.nodes
    }

    /// Iterates links as `(a, b, relationship)`; `a` is the provider for
    /// provider-to-customer links.
    pub fn links(&self) -> impl Iterator<Item = (Asn, Asn, Relationship)> + '_ {
        self.links.iter().map(|(&(a, b), &r)| (a, b, r))
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Clique candidates from a `# input clique:` header, if present.
    pub fn clique_header(&self) -> Option<&BTreeSet<Asn>> {
        self.clique_header.as_ref()
    }

    pub fn set_clique_header(&mut self, clique: Option<BTreeSet<Asn>>) {
        self.clique_header = clique;
    }

    /// Renders the graph back to serial-2 text.
    pub fn to_serial2(&self) -> String {
        let mut out = String::new();
        if let Some(clique) = &self.clique_header {
            out.push_str(CLIQUE_HEADER);
            for asn in clique {
                let _ = write!(out, " {asn}");
            }
            out.push('\n');
        }
        for (a, b, rel) in self.links() {
            let _ = writeln!(out, "{a}|{b}|{}", rel.code());
        }
        out
    }
}

fn parse_asn(tok: &str) -> Option<Asn> {
    match tok.trim().parse::<u32>() {
        Ok(0) | Err(_) => None,
        Ok(v) => Some(Asn(v)),
    }
}

/// One adjacency entry of the compact topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    /// Node index of the neighbor.
    pub node: u32,
    pub kind: NeighborKind,
}

/// Immutable, resolved AS topology.
///
/// Nodes are indexed `0..len()` in ascending ASN order, and every adjacency
/// list is sorted the same way, so iterating neighbors visits them in ASN
/// order.
#[derive(Debug, Clone)]
pub struct AsTopology {
    asns: Vec<Asn>,
    index: HashMap<Asn, u32>,
    offsets: Vec<usize>,
    adjacency: Vec<Neighbor>,
    reverse: Vec<usize>,
    cone_size: Vec<u32>,
    class: Vec<UclaClass>,
    clique: BTreeSet<Asn>,
}

impl AsTopology {
    /// Resolves a parsed graph: builds adjacency, computes customer cones,
    /// resolves the clique (override, then header, then derivation) and
    /// classifies every AS.
    pub fn build(graph: &RelationshipGraph, clique_override: Option<&BTreeSet<Asn>>) -> Result<Self> {
        let asns: Vec<Asn> = graph.nodes().iter().copied().collect();
        let index: HashMap<Asn, u32> = asns.iter().enumerate().map(|(i, &a)| (a, i as u32)).collect();

        let mut lists: Vec<Vec<Neighbor>> = vec![Vec::new(); asns.len()];
        for (a, b, rel) in graph.links() {
            let (ia, ib) = (index[&a], index[&b]);
            let (ka, kb) = match rel {
                Relationship::ProviderToCustomer => (NeighborKind::Customer, NeighborKind::Provider),
                Relationship::PeerToPeer => (NeighborKind::Peer, NeighborKind::Peer),
            };
            lists[ia as usize].push(Neighbor { node: ib, kind: ka });
            lists[ib as usize].push(Neighbor { node: ia, kind: kb });
        }

        let mut offsets = Vec::with_capacity(asns.len() + 1);
        let mut adjacency = Vec::with_capacity(graph.link_count() * 2);
        offsets.push(0);
        for mut list in lists {
            list.sort_by_key(|n| n.node);
            adjacency.extend(list);
            offsets.push(adjacency.len());
        }

        let mut topo = AsTopology {
            asns,
            index,
            offsets,
            adjacency,
            reverse: Vec::new(),
            cone_size: Vec::new(),
            class: Vec::new(),
            clique: BTreeSet::new(),
        };
        topo.reverse = (0..topo.len())
            .flat_map(|u| {
                let topo = &topo;
                topo.edge_range(u).map(move |e| {
                    let v = topo.adjacency[e].node as usize;
                    topo.edge_between(v, u).expect("adjacency is symmetric")
                })
            })
            .collect();

        topo.cone_size = topo.compute_cone_sizes()?;
        let clique = tier1_clique_with_header(&topo, clique_override, graph.clique_header())?;
        topo.clique = clique;
        topo.class = (0..topo.len())
            .map(|i| {
                if topo.clique.contains(&topo.asns[i]) {
                    UclaClass::Tier1
                } else {
                    UclaClass::from_cone_size(topo.cone_size[i] as usize)
                }
            })
            .collect();
        Ok(topo)
    }

    pub fn len(&self) -> usize {
        self.asns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asns.is_empty()
    }

    pub fn asns(&self) -> &[Asn] {
        &self.asns
    }

    pub fn asn(&self, node: usize) -> Asn {
        self.asns[node]
    }

    pub fn node(&self, asn: Asn) -> Option<usize> {
        self.index.get(&asn).map(|&i| i as usize)
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.index.contains_key(&asn)
    }

    pub(crate) fn require(&self, asn: Asn) -> Result<usize> {
        self.node(asn).ok_or(Error::UnknownAs(asn))
    }

    pub(crate) fn edge_range(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub(crate) fn neighbors_total(&self) -> usize {
        self.adjacency.len()
    }

    pub(crate) fn edge(&self, edge: usize) -> Neighbor {
        self.adjacency[edge]
    }

    /// Edge index at the other endpoint pointing back to this edge's source.
    pub(crate) fn reverse_edge(&self, edge: usize) -> usize {
        self.reverse[edge]
    }

    pub(crate) fn edge_between(&self, from: usize, to: usize) -> Option<usize> {
        let range = self.edge_range(from);
        let start = range.start;
        self.adjacency[range]
            .binary_search_by_key(&(to as u32), |n| n.node)
            .ok()
            .map(|i| start + i)
    }

    /// Neighbors of a node in ascending ASN order.
    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.adjacency[self.edge_range(node)]
    }

    /// What `other` is to `local`, if they are linked.
    pub fn relationship(&self, local: Asn, other: Asn) -> Option<NeighborKind> {
        let (l, o) = (self.node(local)?, self.node(other)?);
        self.edge_between(l, o).map(|e| self.adjacency[e].kind)
    }

    fn neighbors_of_kind(&self, asn: Asn, kind: NeighborKind) -> Result<BTreeSet<Asn>> {
        let node = self.require(asn)?;
        Ok(self
            .neighbors(node)
            .iter()
            .filter(|n| n.kind == kind)
            .map(|n| self.asns[n.node as usize])
            .collect())
    }

    pub fn providers_of(&self, asn: Asn) -> Result<BTreeSet<Asn>> {
        self.neighbors_of_kind(asn, NeighborKind::Provider)
    }

    pub fn customers_of(&self, asn: Asn) -> Result<BTreeSet<Asn>> {
        self.neighbors_of_kind(asn, NeighborKind::Customer)
    }

    pub fn peers_of(&self, asn: Asn) -> Result<BTreeSet<Asn>> {
        self.neighbors_of_kind(asn, NeighborKind::Peer)
    }

    pub(crate) fn has_provider(&self, node: usize) -> bool {
        self.neighbors(node).iter().any(|n| n.kind == NeighborKind::Provider)
    }

    pub fn clique(&self) -> &BTreeSet<Asn> {
        &self.clique
    }

    pub fn cone_size(&self, asn: Asn) -> Result<usize> {
        Ok(self.cone_size[self.require(asn)?] as usize)
    }

    pub fn ucla_class(&self, asn: Asn) -> Result<UclaClass> {
        Ok(self.class[self.require(asn)?])
    }

    pub(crate) fn class_of(&self, node: usize) -> UclaClass {
        self.class[node]
    }

    /// Number of ASes in each class.
    pub fn class_counts(&self) -> BTreeMap<UclaClass, usize> {
        let mut counts: BTreeMap<UclaClass, usize> = UclaClass::ALL.iter().map(|&c| (c, 0)).collect();
        for &c in &self.class {
            *counts.entry(c).or_default() += 1;
        }
        counts
    }

    /// All ASes reachable from `asn` over provider-to-customer links, `asn`
    /// itself excluded.
    pub fn customer_cone(&self, asn: Asn) -> Result<BTreeSet<Asn>> {
        let node = self.require(asn)?;
        Ok(self.cone_nodes(node).into_iter().map(|n| self.asns[n]).collect())
    }

    /// Cone members as node indices in ascending ASN order.
    pub(crate) fn cone_nodes(&self, node: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![node];
        let mut out = Vec::new();
        seen[node] = true;
        while let Some(u) = stack.pop() {
            for n in self.neighbors(u) {
                let v = n.node as usize;
                if n.kind == NeighborKind::Customer && !seen[v] {
                    seen[v] = true;
                    out.push(v);
                    stack.push(v);
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn compute_cone_sizes(&self) -> Result<Vec<u32>> {
        // Kahn's algorithm on provider -> customer edges rejects cycles.
        let n = self.len();
        let mut pending: Vec<usize> = (0..n)
            .map(|u| {
                self.neighbors(u)
                    .iter()
                    .filter(|x| x.kind == NeighborKind::Provider)
                    .count()
            })
            .collect();
        let mut queue: Vec<usize> = (0..n).filter(|&u| pending[u] == 0).collect();
        let mut visited = 0;
        while let Some(u) = queue.pop() {
            visited += 1;
            for x in self.neighbors(u) {
                if x.kind == NeighborKind::Customer {
                    let v = x.node as usize;
                    pending[v] -= 1;
                    if pending[v] == 0 {
                        queue.push(v);
                    }
                }
            }
        }
        if visited != n {
            let on_cycle = (0..n).find(|&u| pending[u] > 0).expect("unvisited node");
            return Err(Error::ProviderCycle(self.asns[on_cycle]));
        }

        let mut stamp = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut sizes = vec![0u32; n];
        for root in 0..n {
            let mut count = 0u32;
            stamp[root] = root;
            stack.push(root);
            while let Some(u) = stack.pop() {
                for x in self.neighbors(u) {
                    let v = x.node as usize;
                    if x.kind == NeighborKind::Customer && stamp[v] != root {
                        stamp[v] = root;
                        count += 1;
                        stack.push(v);
                    }
                }
            }
            sizes[root] = count;
        }
        Ok(sizes)
    }

    /// Reconstructs the relationship graph, including the resolved clique as
    /// header.
    pub fn to_relationship_graph(&self) -> RelationshipGraph {
        let mut graph = RelationshipGraph::new();
        for u in 0..self.len() {
            for n in self.neighbors(u) {
                let (a, b) = (self.asns[u], self.asns[n.node as usize]);
                match n.kind {
                    NeighborKind::Customer => {
                        graph.insert_link(a, b, Relationship::ProviderToCustomer).ok();
                    }
                    NeighborKind::Peer if a < b => {
                        graph.insert_link(a, b, Relationship::PeerToPeer).ok();
                    }
                    _ => {}
                }
            }
        }
        graph.set_clique_header(Some(self.clique.clone()));
        graph
    }
}

/// Resolves the Tier-1 clique of a built topology.
///
/// An explicit override wins; otherwise the clique is derived greedily from
/// provider-free ASes ordered by descending cone size (ASN ascending on ties),
/// keeping each candidate that peers with every member chosen so far.
pub fn tier1_clique(topology: &AsTopology, clique_override: Option<&BTreeSet<Asn>>) -> Result<BTreeSet<Asn>> {
    tier1_clique_with_header(topology, clique_override, None)
}

fn tier1_clique_with_header(
    topology: &AsTopology,
    clique_override: Option<&BTreeSet<Asn>>,
    header: Option<&BTreeSet<Asn>>,
) -> Result<BTreeSet<Asn>> {
    if let Some(given) = clique_override.or(header) {
        for &asn in given {
            let node = topology.require(asn)?;
            if topology.has_provider(node) {
                return Err(Error::CliqueMemberHasProvider(asn));
            }
        }
        return Ok(given.clone());
    }

    let mut candidates: Vec<usize> = (0..topology.len()).filter(|&u| !topology.has_provider(u)).collect();
    candidates.sort_by_key(|&u| (std::cmp::Reverse(topology.cone_size[u]), topology.asns[u]));
    let mut chosen: Vec<usize> = Vec::new();
    for u in candidates {
        let peers_all = chosen.iter().all(|&c| {
            topology
                .edge_between(u, c)
                .is_some_and(|e| topology.adjacency[e].kind == NeighborKind::Peer)
        });
        if peers_all {
            chosen.push(u);
        }
    }
    Ok(chosen.into_iter().map(|u| topology.asns[u]).collect())
}
