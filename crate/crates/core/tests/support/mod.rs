// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference implementations used as test oracles. Nothing here
//! touches the simulator's adjacency structures or engine.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use leaksim::topology::{Relationship, RelationshipGraph};
use leaksim::Asn;

/// What `b` is to `a`, read straight from the link list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rel {
    Customer,
    Peer,
    Provider,
}

pub struct LinkTable {
    pub nodes: Vec<Asn>,
    pub rel: BTreeMap<(Asn, Asn), Rel>,
}

impl LinkTable {
    pub fn new(graph: &RelationshipGraph) -> Self {
        let mut rel = BTreeMap::new();
        for (a, b, r) in graph.links() {
            match r {
                Relationship::ProviderToCustomer => {
                    rel.insert((a, b), Rel::Customer);
                    rel.insert((b, a), Rel::Provider);
                }
                Relationship::PeerToPeer => {
                    rel.insert((a, b), Rel::Peer);
                    rel.insert((b, a), Rel::Peer);
                }
            }
        }
        LinkTable {
            nodes: graph.nodes().iter().copied().collect(),
            rel,
        }
    }

    pub fn get(&self, a: Asn, b: Asn) -> Option<Rel> {
        self.rel.get(&(a, b)).copied()
    }

    fn neighbors(&self, a: Asn) -> impl Iterator<Item = (Asn, Rel)> + '_ {
        self.rel
            .range((a, Asn(0))..=(a, Asn(u32::MAX)))
            .map(|(&(_, b), &r)| (b, r))
    }
}

/// Valley-free check for a path read from installer to origin: zero or more
/// steps up to a provider, at most one peer step, then only steps down to
/// customers.
pub fn is_valley_free(links: &LinkTable, path: &[Asn]) -> bool {
    // phase 0: climbing, 1: after the peer step or first descent
    let mut phase = 0;
    for w in path.windows(2) {
        match links.get(w[0], w[1]) {
            None => return false,
            Some(Rel::Provider) => {
                if phase != 0 {
                    return false;
                }
            }
            Some(Rel::Peer) => {
                if phase != 0 {
                    return false;
                }
                phase = 1;
            }
            Some(Rel::Customer) => phase = 1,
        }
    }
    true
}

/// Every valley-free simple path from any AS to `origin`, grouped by the
/// installing AS.
pub fn all_valley_free_paths(links: &LinkTable, origin: Asn) -> BTreeMap<Asn, Vec<Vec<Asn>>> {
    let mut out: BTreeMap<Asn, Vec<Vec<Asn>>> = BTreeMap::new();
    // walk outward from the origin; the reversed walk is the installed path
    let mut stack = vec![vec![origin]];
    while let Some(walk) = stack.pop() {
        let last = *walk.last().unwrap();
        for (next, _) in links.neighbors(last) {
            if walk.contains(&next) {
                continue;
            }
            let mut extended = walk.clone();
            extended.push(next);
            let installed: Vec<Asn> = extended.iter().rev().copied().collect();
            if is_valley_free(links, &installed) {
                out.entry(next).or_default().push(installed);
                stack.push(extended);
            }
        }
    }
    out
}

fn rank(r: Rel) -> u8 {
    match r {
        Rel::Customer => 0,
        Rel::Peer => 1,
        Rel::Provider => 2,
    }
}

/// Stable route selection by exhaustive search: each AS picks, among its
/// valley-free paths whose tail is the next hop's own selection, the one
/// ranked best by (next-hop relationship, length, next-hop ASN). Iterated
/// synchronously from the origin until nothing changes.
pub fn oracle_best_paths(graph: &RelationshipGraph, origin: Asn) -> BTreeMap<Asn, Vec<Asn>> {
    let links = LinkTable::new(graph);
    let paths = all_valley_free_paths(&links, origin);
    let mut selected: BTreeMap<Asn, Vec<Asn>> = BTreeMap::new();
    selected.insert(origin, vec![origin]);
    for _ in 0..(4 * links.nodes.len() + 8) {
        let mut next = BTreeMap::new();
        next.insert(origin, vec![origin]);
        for (&asn, options) in &paths {
            if asn == origin {
                continue;
            }
            let best = options
                .iter()
                .filter(|p| selected.get(&p[1]).is_some_and(|s| s[..] == p[1..]))
                .min_by_key(|p| (rank(links.get(p[0], p[1]).unwrap()), p.len(), p[1]));
            if let Some(best) = best {
                next.insert(asn, best.clone());
            }
        }
        if next == selected {
            return selected;
        }
        selected = next;
    }
    panic!("oracle selection did not stabilise");
}

/// Customer cone by exhaustive reachability over provider links.
pub fn brute_cone(graph: &RelationshipGraph, asn: Asn) -> BTreeSet<Asn> {
    let mut cone = BTreeSet::new();
    let mut frontier = vec![asn];
    while let Some(a) = frontier.pop() {
        for (p, c, r) in graph.links() {
            if r == Relationship::ProviderToCustomer && p == a && c != asn && cone.insert(c) {
                frontier.push(c);
            }
        }
    }
    cone
}

/// Random filter deployment against one target: some clique members and
/// transit ASes Peerlock for it, some non-clique transit ASes run
/// Peerlock-lite for the clique plus the target.
pub fn plant_scenario(
    topo: &leaksim::topology::AsTopology,
    target: Asn,
    rng: &mut impl rand::Rng,
) -> leaksim::filters::ProtectionScenario {
    use leaksim::filters::{PeerlockLiteDeployment, PeerlockRule, ProtectionScenario};
    use leaksim::topology::UclaClass;

    let mut scenario = ProtectionScenario::empty("planted");
    let mut protected: BTreeSet<Asn> = topo.clique().clone();
    protected.insert(target);
    for &asn in topo.asns() {
        if asn == target {
            continue;
        }
        let class = topo.ucla_class(asn).unwrap();
        let p_lock = match class {
            UclaClass::Tier1 => 0.5,
            UclaClass::LargeIsp | UclaClass::SmallIsp => 0.05,
            UclaClass::Stub => 0.0,
        };
        if rng.gen_bool(p_lock) {
            scenario.add_rule(PeerlockRule::new(asn, target)).unwrap();
        }
        if class != UclaClass::Tier1 && class != UclaClass::Stub && rng.gen_bool(0.1) {
            scenario.add_lite(PeerlockLiteDeployment {
                deployer: asn,
                protected_set: protected.clone(),
            });
        }
    }
    scenario
}

/// One import decision and the reason it should produce.
pub struct FilterCase {
    pub name: &'static str,
    pub receiver: u32,
    pub sender: u32,
    pub sender_kind: leaksim::topology::NeighborKind,
    pub path: &'static [u32],
    pub expected: Option<leaksim::filters::DropReason>,
}

/// Scenario used by [`filter_cases`]: 20 Peerlocks for 10 with 30 as an
/// authorized upstream, 70 Peerlocks for 10 with no upstreams, 50 runs
/// Peerlock-lite for {10, 20}, 80 filters poisoned paths.
pub fn filter_table_scenario() -> leaksim::filters::ProtectionScenario {
    use leaksim::filters::{PeerlockLiteDeployment, PeerlockRule, ProtectionScenario};
    let mut s = ProtectionScenario::empty("table");
    s.add_rule(PeerlockRule::new(Asn(20), Asn(10)).with_upstreams([Asn(30)]))
        .unwrap();
    s.add_rule(PeerlockRule::new(Asn(70), Asn(10))).unwrap();
    s.add_lite(PeerlockLiteDeployment {
        deployer: Asn(50),
        protected_set: [Asn(10), Asn(20)].into(),
    });
    s.poison_filterers.insert(Asn(80));
    s
}

pub fn filter_cases() -> Vec<FilterCase> {
    use leaksim::filters::DropReason::*;
    use leaksim::topology::NeighborKind::*;
    let case = |name, receiver, sender, sender_kind, path, expected| FilterCase {
        name,
        receiver,
        sender,
        sender_kind,
        path,
        expected,
    };
    vec![
        case(
            "peerlock accepts the protected AS itself",
            70,
            10,
            Peer,
            &[10, 40],
            None,
        ),
        case(
            "peerlock drops the protected AS behind a customer",
            70,
            30,
            Customer,
            &[30, 10, 40],
            Some(Peerlock),
        ),
        case(
            "peerlock drops the protected AS behind a peer",
            70,
            60,
            Peer,
            &[60, 10, 40],
            Some(Peerlock),
        ),
        case(
            "peerlock drops the protected AS deep in the path",
            70,
            30,
            Customer,
            &[30, 60, 10, 40],
            Some(Peerlock),
        ),
        case(
            "peerlock ignores paths without the protected AS",
            70,
            30,
            Customer,
            &[30, 40],
            None,
        ),
        case(
            "authorized upstream adjacent to the protected AS",
            20,
            30,
            Customer,
            &[30, 10, 40],
            None,
        ),
        case(
            "authorized upstream not adjacent to the protected AS",
            20,
            30,
            Customer,
            &[30, 60, 10, 40],
            Some(Peerlock),
        ),
        case(
            "unauthorized sender with the protected AS next",
            20,
            60,
            Customer,
            &[60, 10, 40],
            Some(Peerlock),
        ),
        case(
            "peerlock-lite drops a customer path with a protected AS",
            50,
            60,
            Customer,
            &[60, 10, 40],
            Some(PeerlockLite),
        ),
        case(
            "peerlock-lite checks every protected AS",
            50,
            60,
            Customer,
            &[60, 20, 40],
            Some(PeerlockLite),
        ),
        case(
            "peerlock-lite accepts the same path from a peer",
            50,
            60,
            Peer,
            &[60, 10, 40],
            None,
        ),
        case(
            "peerlock-lite accepts the same path from a provider",
            50,
            10,
            Provider,
            &[10, 40],
            None,
        ),
        case(
            "peerlock-lite accepts a clean customer path",
            50,
            60,
            Customer,
            &[60, 40],
            None,
        ),
        case(
            "non-deployers accept customer leaks",
            60,
            30,
            Customer,
            &[30, 10, 40],
            None,
        ),
        case(
            "poison filter drops a sandwich",
            80,
            60,
            Peer,
            &[60, 40, 99, 40],
            Some(PoisonFilter),
        ),
        case("poison filter accepts a clean path", 80, 60, Peer, &[60, 40], None),
        case(
            "other ASes accept poisoned paths",
            60,
            80,
            Customer,
            &[80, 40, 99, 40],
            None,
        ),
    ]
}

/// Mismatches between [`filter_cases`] and the scenario's verdicts.
pub fn filter_table_failures() -> Vec<String> {
    let scenario = filter_table_scenario();
    filter_cases()
        .into_iter()
        .filter_map(|c| {
            let path: Vec<Asn> = c.path.iter().map(|&a| Asn(a)).collect();
            let got = scenario.check(Asn(c.receiver), Asn(c.sender), c.sender_kind, &path);
            (got != c.expected).then(|| format!("{}: expected {:?}, got {:?}", c.name, c.expected, got))
        })
        .collect()
}

/// End-to-end leak fixtures: a multi-homed customer leaks a Tier-1 route
/// up to a second provider that does or does not filter it.
pub fn filter_engine_failures() -> Vec<String> {
    use leaksim::engine::{PhaseTag, RoutingState};
    use leaksim::filters::{DropReason, PeerlockLiteDeployment, PeerlockRule, ProtectionScenario};
    use leaksim::topology::AsTopology;
    use leaksim::PrefixId;

    // 10 and 20 are Tier-1 peers. 40 originates below 10. 30 buys transit
    // from both Tier-1s. 60 buys from 10 and from 50, a customer of 20.
    let text = "10|20|0\n10|40|-1\n10|30|-1\n20|30|-1\n20|50|-1\n10|60|-1\n50|60|-1\n";
    let graph = RelationshipGraph::parse(text).unwrap();
    let topo = AsTopology::build(&graph, Some(&[Asn(10), Asn(20)].into())).unwrap();

    let mut peerlock = ProtectionScenario::empty("peerlock");
    peerlock.add_rule(PeerlockRule::new(Asn(20), Asn(10))).unwrap();
    let mut lite = ProtectionScenario::empty("lite");
    lite.add_lite(PeerlockLiteDeployment {
        deployer: Asn(50),
        protected_set: [Asn(10), Asn(20)].into(),
    });
    let none = ProtectionScenario::empty("none");

    // (scenario, leaker, watched AS, leak installed, expected drop reason, installed path)
    type Row<'s> = (
        &'s ProtectionScenario,
        u32,
        u32,
        bool,
        Option<DropReason>,
        &'static [u32],
    );
    let table: [Row; 4] = [
        (&none, 30, 20, true, None, &[20, 30, 10, 40]),
        (&peerlock, 30, 20, false, Some(DropReason::Peerlock), &[20, 10, 40]),
        (&none, 60, 50, true, None, &[50, 60, 10, 40]),
        (&lite, 60, 50, false, Some(DropReason::PeerlockLite), &[50, 20, 10, 40]),
    ];
    let mut failures = Vec::new();
    for (scenario, leaker, watched, leaked, reason, path) in table {
        let filter = scenario.compile(&topo);
        let mut state = RoutingState::new(&topo, PrefixId(0), PhaseTag::Plain);
        state.originate(Asn(40), &[]).unwrap();
        state.converge(&filter).unwrap();
        state.inject_leak(Asn(leaker)).unwrap();
        state.converge(&filter).unwrap();
        let label = format!("{} leak by {leaker} at {watched}", scenario.name);
        if state.is_leak_installed(Asn(watched)) != leaked {
            failures.push(format!("{label}: leak installed should be {leaked}"));
        }
        let want: Vec<Asn> = path.iter().map(|&a| Asn(a)).collect();
        if state.installed_path(Asn(watched)) != Some(want.clone()) {
            failures.push(format!(
                "{label}: installed {:?}, expected {want:?}",
                state.installed_path(Asn(watched))
            ));
        }
        if let Some(reason) = reason {
            let drops = state.drop_log().get(&Asn(watched)).map_or(0, |d| d.get(reason));
            if drops == 0 {
                failures.push(format!("{label}: no {} drop logged", reason.name()));
            }
        }
    }
    failures
}

/// Leak-segment encoder built only from the link list: classes come from
/// brute-force cones, roles from the raw relationship table.
pub struct HandEncoder<'a> {
    links: &'a LinkTable,
    graph: &'a RelationshipGraph,
    clique: BTreeSet<Asn>,
    classes: std::cell::RefCell<BTreeMap<Asn, char>>,
}

impl<'a> HandEncoder<'a> {
    pub fn new(graph: &'a RelationshipGraph, links: &'a LinkTable, clique: BTreeSet<Asn>) -> Self {
        HandEncoder {
            links,
            graph,
            clique,
            classes: Default::default(),
        }
    }

    fn class(&self, asn: Asn) -> char {
        *self.classes.borrow_mut().entry(asn).or_insert_with(|| {
            if self.clique.contains(&asn) {
                return 'T';
            }
            match brute_cone(self.graph, asn).len() {
                n if n > 50 => 'L',
                n if n >= 5 => 'S',
                _ => 'U',
            }
        })
    }

    /// Renders the segment of `path` ending at `leaker`, e.g. `[LR, TP]`,
    /// or `None` when the path steps down inside the segment.
    pub fn encode(&self, path: &[Asn], leaker: Asn) -> Option<String> {
        let at = path.iter().position(|&a| a == leaker)?;
        let tokens: Vec<(Asn, char)> = (0..at)
            .map(|i| {
                // what the next AS toward the leaker is to this one
                let role = match self.links.rel[&(path[i], path[i + 1])] {
                    Rel::Customer => 'P',
                    Rel::Peer => 'R',
                    Rel::Provider => 'C',
                };
                (path[i], role)
            })
            .collect();
        let kept: Vec<&(Asn, char)> = tokens.iter().skip_while(|(_, r)| *r == 'C').collect();
        if kept.iter().any(|(_, r)| *r == 'C') {
            return None;
        }
        let body: Vec<String> = kept.iter().map(|(a, r)| format!("{}{r}", self.class(*a))).collect();
        Some(format!("[{}]", body.join(", ")))
    }
}
