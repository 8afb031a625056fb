// SPDX-License-Identifier: Apache-2.0

//! Regenerates the shipped regression topologies, their partial Tier-1 rule
//! sets, and the inferred Tier-1 rule sample.
//!
//! cargo run -p leaksim --example gen_fixtures -- <fixtures dir> <data dir>

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use leaksim::synth::{hierarchical, HierarchyParams};
use leaksim::Asn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Share of possible clique rules present in the partial rule sets.
const PARTIAL_RULE_SHARE: f64 = 153.0 / 342.0;

const JAN_2020_CLIQUE: [u32; 19] = [
    174, 209, 286, 701, 1239, 1299, 2828, 2914, 3257, 3320, 3356, 3491, 5511, 6453, 6461, 6762, 6830, 7018, 12956,
];

fn rule_file(header: &str, rules: &[(Asn, Asn)]) -> String {
    let mut out = format!("# {header}\n# protector protected\n");
    for (a, b) in rules {
        writeln!(out, "{a} {b}").unwrap();
    }
    out
}

fn partial_rules(clique: &BTreeSet<Asn>, seed: u64) -> Vec<(Asn, Asn)> {
    let mut pairs: Vec<(Asn, Asn)> = clique
        .iter()
        .flat_map(|&a| clique.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
        .collect();
    let keep = (pairs.len() as f64 * PARTIAL_RULE_SHARE).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    pairs.truncate(keep);
    pairs.sort();
    pairs
}

/// 153 clique rules: two protectors cover the whole clique, five protect
/// nobody, and the rest are drawn at random.
fn inferred_sample(seed: u64) -> Vec<(Asn, Asn)> {
    let clique: Vec<Asn> = JAN_2020_CLIQUE.iter().map(|&a| Asn(a)).collect();
    let full = [Asn(701), Asn(2914)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rest: Vec<Asn> = clique
        .iter()
        .copied()
        .filter(|a| !full.contains(a) && ![Asn(3491), Asn(6762)].contains(a))
        .collect();
    rest.shuffle(&mut rng);
    let silent: BTreeSet<Asn> = [Asn(3491), Asn(6762)].into_iter().chain(rest.drain(..3)).collect();

    let mut rules: Vec<(Asn, Asn)> = Vec::new();
    for &p in &full {
        rules.extend(clique.iter().filter(|&&b| b != p).map(|&b| (p, b)));
    }
    let mut candidates: Vec<(Asn, Asn)> = clique
        .iter()
        .filter(|a| !full.contains(a) && !silent.contains(a))
        .flat_map(|&a| clique.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
        .collect();
    candidates.shuffle(&mut rng);
    rules.extend(candidates.into_iter().take(153 - rules.len()));
    rules.sort();
    rules
}

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let fixtures = PathBuf::from(args.next().unwrap_or_else(|| "crates/core/tests/fixtures".into()));
    let data = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&fixtures)?;
    std::fs::create_dir_all(&data)?;

    for (name, seed) in [("a", 101), ("b", 202), ("c", 303)] {
        let graph = hierarchical(&HierarchyParams::regression(), seed);
        let clique = graph.clique_header().cloned().unwrap_or_default();
        std::fs::write(fixtures.join(format!("regression_{name}.txt")), graph.to_serial2())?;
        let rules = partial_rules(&clique, seed);
        let header = format!("partial clique Peerlock rules for regression_{name}");
        std::fs::write(
            fixtures.join(format!("regression_{name}_rules.txt")),
            rule_file(&header, &rules),
        )?;
    }
    let mid = hierarchical(&HierarchyParams::mid_size(), 7);
    std::fs::write(fixtures.join("mid_size.txt"), mid.to_serial2())?;

    let rules = inferred_sample(2020);
    let header = "Tier-1 Peerlock rules, 153 of 342, for the January 2020 clique";
    std::fs::write(data.join("inferred_t1_rules.txt"), rule_file(header, &rules))?;
    Ok(())
}
