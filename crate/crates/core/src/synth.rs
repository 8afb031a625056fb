// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic topologies for tests, fixtures and experiments.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::topology::{Relationship, RelationshipGraph};
use crate::types::Asn;

/// Random small graph: nodes get a random rank, every pair is linked
/// provider-to-customer (lower rank providing) with probability
/// `p_provider`, else peered with probability `p_peer`. Rank ordering rules
/// out provider cycles.
pub fn random_small(seed: u64, nodes: usize, p_provider: f64, p_peer: f64) -> RelationshipGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<u32> = (1..=(nodes as u32 * 7)).collect();
    pool.shuffle(&mut rng);
    let asns: Vec<Asn> = pool.into_iter().take(nodes).map(Asn).collect();

    let mut graph = RelationshipGraph::new();
    for i in 0..nodes {
        for j in (i + 1)..nodes {
            let roll: f64 = rng.gen();
            if roll < p_provider {
                graph
                    .add_link(asns[i], asns[j], Relationship::ProviderToCustomer)
                    .expect("fresh pair");
            } else if roll < p_provider + p_peer {
                graph
                    .add_link(asns[i], asns[j], Relationship::PeerToPeer)
                    .expect("fresh pair");
            }
        }
    }
    graph
}

/// Shape of a tiered synthetic Internet.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyParams {
    pub tier1: usize,
    pub transit: usize,
    pub regional: usize,
    pub stubs: usize,
    /// Peering probability between two transit ASes.
    pub transit_peering: f64,
    /// Peering probability between a regional AS and a transit or regional AS.
    pub regional_peering: f64,
    /// Probability that a transit AS also peers with a Tier-1.
    pub tier1_peering: f64,
}

impl HierarchyParams {
    /// Roughly 200 ASes.
    pub fn mid_size() -> Self {
        HierarchyParams {
            tier1: 5,
            transit: 15,
            regional: 40,
            stubs: 140,
            transit_peering: 0.25,
            regional_peering: 0.03,
            tier1_peering: 0.15,
        }
    }

    /// Roughly 2,000 ASes, enough for several large ISPs.
    pub fn regression() -> Self {
        HierarchyParams {
            tier1: 7,
            transit: 40,
            regional: 350,
            stubs: 1600,
            transit_peering: 0.2,
            regional_peering: 0.004,
            tier1_peering: 0.1,
        }
    }

    pub fn total(&self) -> usize {
        self.tier1 + self.transit + self.regional + self.stubs
    }
}

/// Tiered topology with a fully meshed Tier-1 clique (emitted as the clique
/// header). Providers are picked by preferential attachment, which yields a
/// skewed cone-size distribution.
pub fn hierarchical(params: &HierarchyParams, seed: u64) -> RelationshipGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<u32> = (1..=(params.total() as u32 * 20)).collect();
    pool.shuffle(&mut rng);
    let mut ids = pool.into_iter().map(Asn);
    let mut take = |n: usize| -> Vec<Asn> { ids.by_ref().take(n).collect() };
    let tier1 = take(params.tier1);
    let transit = take(params.transit);
    let regional = take(params.regional);
    let stubs = take(params.stubs);

    let mut graph = RelationshipGraph::new();
    let mut weight: std::collections::HashMap<Asn, u32> = std::collections::HashMap::new();
    let link = |graph: &mut RelationshipGraph, a: Asn, b: Asn, rel: Relationship| {
        // pairs that already have a link keep it
        graph.add_link(a, b, rel).ok();
    };

    for (i, &a) in tier1.iter().enumerate() {
        for &b in &tier1[i + 1..] {
            link(&mut graph, a, b, Relationship::PeerToPeer);
        }
    }

    let mut pick_providers = |rng: &mut ChaCha8Rng, pool: &[Asn], count: usize| -> Vec<Asn> {
        let mut chosen = BTreeSet::new();
        for _ in 0..count * 4 {
            if chosen.len() == count || chosen.len() == pool.len() {
                break;
            }
            let p = *pool
                .choose_weighted(rng, |a| 1 + weight.get(a).copied().unwrap_or(0))
                .expect("non-empty pool");
            chosen.insert(p);
        }
        for p in &chosen {
            *weight.entry(*p).or_default() += 1;
        }
        chosen.into_iter().collect()
    };

    for (i, &a) in transit.iter().enumerate() {
        let mut pool = tier1.clone();
        pool.extend_from_slice(&transit[..i]);
        let k = rng.gen_range(1..=3);
        for p in pick_providers(&mut rng, &pool, k) {
            link(&mut graph, p, a, Relationship::ProviderToCustomer);
        }
        for &t in &tier1 {
            if rng.gen_bool(params.tier1_peering) {
                link(&mut graph, a, t, Relationship::PeerToPeer);
            }
        }
        for &b in &transit[..i] {
            if rng.gen_bool(params.transit_peering) {
                link(&mut graph, a, b, Relationship::PeerToPeer);
            }
        }
    }

    for (i, &a) in regional.iter().enumerate() {
        let mut pool = transit.clone();
        pool.extend_from_slice(&tier1);
        pool.extend_from_slice(&regional[..i]);
        let k = rng.gen_range(1..=3);
        for p in pick_providers(&mut rng, &pool, k) {
            link(&mut graph, p, a, Relationship::ProviderToCustomer);
        }
        for &b in transit.iter().chain(&regional[..i]) {
            if rng.gen_bool(params.regional_peering) {
                link(&mut graph, a, b, Relationship::PeerToPeer);
            }
        }
    }

    let mut pool = transit.clone();
    pool.extend_from_slice(&regional);
    for &a in &stubs {
        let k = rng.gen_range(1..=2);
        for p in pick_providers(&mut rng, &pool, k) {
            link(&mut graph, p, a, Relationship::ProviderToCustomer);
        }
    }

    graph.set_clique_header(Some(tier1.into_iter().collect()));
    graph
}
