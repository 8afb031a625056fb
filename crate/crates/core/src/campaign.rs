// SPDX-License-Identifier: Apache-2.0

//! Tier-1 leak campaigns: enumerate clique links, sample leaker and
//! destination pairs whose routes cross each link, inject Type-1 leaks and
//! collect propagation metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoding::{leak_segment, EncodingTally};
use crate::engine::{DropCounts, PhaseTag, RoutingState};
use crate::error::{Error, Result};
use crate::filters::{ImportFilter, NoFilter, ProtectionScenario};
use crate::topology::AsTopology;
use crate::types::{Asn, PrefixId};

/// Destination draws per leaker before it is skipped.
pub const MAX_DESTINATION_ATTEMPTS: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LeakCase {
    pub link_start: Asn,
    pub link_end: Asn,
    pub leaker: Asn,
    pub destination: Asn,
    /// Substream seed of the link this case was drawn from.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// The link start has no customers to act as leakers.
    EmptyCone,
    /// No sampled destination gave the leaker a route across the link.
    NoCrossingRoute,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::EmptyCone => "empty_cone",
            SkipReason::NoCrossingRoute => "no_crossing_route",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipRecord {
    pub link_start: Asn,
    pub link_end: Asn,
    pub leaker: Option<Asn>,
    pub reason: SkipReason,
    pub attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseSample {
    pub cases: Vec<LeakCase>,
    pub skips: Vec<SkipRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakResult {
    pub case: LeakCase,
    /// ASes sent at least one leak update, plus the leaker itself.
    pub received: BTreeSet<Asn>,
    /// ASes whose best route carries leak provenance, including the leaker.
    pub installed: BTreeSet<Asn>,
    /// Final leak export of every exporting AS, `(exporter, path)`.
    pub exported_paths: Vec<(Asn, Vec<Asn>)>,
    pub drop_log: BTreeMap<Asn, DropCounts>,
    pub rounds: usize,
}

/// All ordered pairs of distinct clique members, lexicographic.
pub fn enumerate_t1_links(topology: &AsTopology) -> Vec<(Asn, Asn)> {
    let clique = topology.clique();
    clique
        .iter()
        .flat_map(|&a| clique.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
        .collect()
}

/// Substream seed for a link; independent of iteration order.
pub fn link_seed(link: (Asn, Asn)) -> u64 {
    (u64::from(link.0.get()) << 32) | u64::from(link.1.get())
}

fn link_rng(seed: u64, link: (Asn, Asn)) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(link_seed(link));
    rng
}

/// For every node, whether its unfiltered converged route toward
/// `destination` traverses `link` in order.
fn crossing_nodes(topology: &AsTopology, destination: Asn, link: (Asn, Asn)) -> Result<Vec<bool>> {
    let mut state = RoutingState::new(topology, PrefixId(0), PhaseTag::Plain);
    state.originate(destination, &[])?;
    state.converge(&NoFilter)?;
    let next: Vec<Option<usize>> = topology
        .asns()
        .iter()
        .map(|&a| state.best_entry(a).and_then(|e| topology.node(e.learned_from)))
        .collect();
    let (start, end) = (topology.node(link.0), topology.node(link.1));

    // next-hop chains are acyclic once converged
    let mut known: Vec<Option<bool>> = vec![None; topology.len()];
    let mut chain = Vec::new();
    for node in 0..topology.len() {
        let mut at = node;
        let verdict = loop {
            if let Some(v) = known[at] {
                break v;
            }
            match next[at] {
                Some(n) if Some(at) == start && Some(n) == end => {
                    known[at] = Some(true);
                    break true;
                }
                Some(n) => {
                    chain.push(at);
                    at = n;
                }
                None => {
                    known[at] = Some(false);
                    break false;
                }
            }
        };
        for n in chain.drain(..) {
            known[n] = Some(verdict);
        }
    }
    Ok(known.into_iter().map(|v| v.unwrap_or(false)).collect())
}

/// Samples up to `n` leak cases for one clique link. Leakers are drawn
/// without replacement from the link start's cone; destinations from the
/// link end's cone until the leaker's unfiltered route crosses the link.
pub fn sample_leak_cases(topology: &AsTopology, link: (Asn, Asn), n: usize, seed: u64) -> Result<CaseSample> {
    let mut rng = link_rng(seed, link);
    let leaker_pool: Vec<Asn> = topology.customer_cone(link.0)?.into_iter().collect();
    let destination_pool: Vec<Asn> = topology.customer_cone(link.1)?.into_iter().collect();
    let mut sample = CaseSample::default();
    if leaker_pool.is_empty() || destination_pool.is_empty() {
        log::info!("link {}-{}: empty customer cone, no cases", link.0, link.1);
        sample.skips.push(SkipRecord {
            link_start: link.0,
            link_end: link.1,
            leaker: None,
            reason: SkipReason::EmptyCone,
            attempts: 0,
        });
        return Ok(sample);
    }

    let leakers: Vec<Asn> = leaker_pool.choose_multiple(&mut rng, n).copied().collect();
    let mut cache: HashMap<Asn, Vec<bool>> = HashMap::new();
    let leaker_node = |a: Asn| topology.node(a).expect("cone members are nodes");
    for leaker in leakers {
        let mut accepted = None;
        for _ in 0..MAX_DESTINATION_ATTEMPTS {
            let destination = destination_pool[rng.gen_range(0..destination_pool.len())];
            if destination == leaker {
                continue;
            }
            let crossing = match cache.entry(destination) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => e.insert(crossing_nodes(topology, destination, link)?),
            };
            if crossing[leaker_node(leaker)] {
                accepted = Some(destination);
                break;
            }
        }
        match accepted {
            Some(destination) => sample.cases.push(LeakCase {
                link_start: link.0,
                link_end: link.1,
                leaker,
                destination,
                seed: link_seed(link),
            }),
            None => {
                log::debug!("link {}-{}: leaker {leaker} skipped", link.0, link.1);
                sample.skips.push(SkipRecord {
                    link_start: link.0,
                    link_end: link.1,
                    leaker: Some(leaker),
                    reason: SkipReason::NoCrossingRoute,
                    attempts: MAX_DESTINATION_ATTEMPTS,
                });
            }
        }
    }
    Ok(sample)
}

/// Converges the destination's route under `filter`, then turns the leaker
/// into a Type-1 leaker and converges again.
pub fn run_leak<F: ImportFilter + ?Sized>(topology: &AsTopology, filter: &F, case: &LeakCase) -> Result<LeakResult> {
    let mut state = RoutingState::new(topology, PrefixId(0), PhaseTag::Plain);
    state.originate(case.destination, &[])?;
    let mut rounds = state.converge(filter)?;
    state.inject_leak(case.leaker)?;
    rounds += state.converge(filter)?;

    let mut received = state.leak_received();
    received.insert(case.leaker);
    let mut installed = state.leak_installed();
    installed.insert(case.leaker);
    Ok(LeakResult {
        case: *case,
        received,
        installed,
        exported_paths: state.exported_leak_paths(),
        drop_log: state.drop_log(),
        rounds,
    })
}

/// Per-case campaign outcome. Counts exclude the leaker.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRow {
    pub case: LeakCase,
    pub n_received: usize,
    pub n_installed: usize,
    pub frac_received: f64,
    pub frac_installed: f64,
    /// `None` when the case ran to completion.
    pub error: Option<String>,
    /// Encoding tally of this case's exports.
    pub tally: EncodingTally,
    /// Exported leak paths that could not be segmented.
    pub encoding_errors: u64,
}

impl CaseRow {
    pub fn status(&self) -> String {
        match &self.error {
            None => "ok".to_string(),
            Some(e) => format!("error: {e}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Received,
    Installed,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Received, Metric::Installed];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Received => "received",
            Metric::Installed => "installed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub scenario: String,
    pub topology_size: usize,
    pub rows: Vec<CaseRow>,
    pub skips: Vec<SkipRecord>,
}

impl CampaignReport {
    pub fn completed(&self) -> impl Iterator<Item = &CaseRow> {
        self.rows.iter().filter(|r| r.is_ok())
    }

    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    /// Share of completed cases in which no AS besides the leaker installed
    /// the leak.
    pub fn fully_mitigated_fraction(&self) -> f64 {
        fraction(self.completed(), |r| r.n_installed == 0)
    }

    /// Share of completed cases whose metric exceeds `threshold` of the
    /// topology.
    pub fn spread_beyond_fraction(&self, metric: Metric, threshold: f64) -> f64 {
        fraction(self.completed(), |r| value(r, metric) > threshold)
    }

    pub fn mean_fraction(&self, metric: Metric) -> f64 {
        let values: Vec<f64> = self.completed().map(|r| value(r, metric)).collect();
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    }

    pub fn total_installed(&self) -> usize {
        self.completed().map(|r| r.n_installed).sum()
    }

    /// Empirical CDF points `(x, y)` of the per-case fraction, one per
    /// completed case in ascending order.
    pub fn cdf(&self, metric: Metric) -> Vec<(f64, f64)> {
        let mut values: Vec<f64> = self.completed().map(|r| value(r, metric)).collect();
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        values
            .into_iter()
            .enumerate()
            .map(|(i, x)| (x, (i + 1) as f64 / n))
            .collect()
    }

    /// Encoding tally merged over all completed cases.
    pub fn tally(&self) -> EncodingTally {
        let mut total = EncodingTally::new();
        for row in self.completed() {
            total.merge(&row.tally);
        }
        total
    }

    /// Total number of (case, exporting AS) pairs.
    pub fn exporting_total(&self) -> u64 {
        self.completed().map(|r| r.tally.total() + r.encoding_errors).sum()
    }
}

fn value(row: &CaseRow, metric: Metric) -> f64 {
    match metric {
        Metric::Received => row.frac_received,
        Metric::Installed => row.frac_installed,
    }
}

fn fraction<'a>(rows: impl Iterator<Item = &'a CaseRow>, pred: impl Fn(&CaseRow) -> bool) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for r in rows {
        total += 1;
        hit += usize::from(pred(r));
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Runs one case and folds its exports into an encoding tally.
pub fn evaluate_case<F: ImportFilter + ?Sized>(topology: &AsTopology, filter: &F, case: &LeakCase) -> CaseRow {
    let size = topology.len().max(1) as f64;
    match run_leak(topology, filter, case) {
        Ok(result) => {
            let mut tally = EncodingTally::new();
            let mut encoding_errors = 0;
            for (exporter, path) in &result.exported_paths {
                match leak_segment(path, case.leaker, topology) {
                    Ok(segment) => tally.add(&segment),
                    Err(e) => {
                        encoding_errors += 1;
                        log::warn!("case {case:?}: export of AS {exporter} not encodable: {e}");
                    }
                }
            }
            let n_received = result.received.len() - 1;
            let n_installed = result.installed.len().saturating_sub(1);
            CaseRow {
                case: *case,
                n_received,
                n_installed,
                frac_received: n_received as f64 / size,
                frac_installed: n_installed as f64 / size,
                error: None,
                tally,
                encoding_errors,
            }
        }
        Err(e) => CaseRow {
            case: *case,
            n_received: 0,
            n_installed: 0,
            frac_received: 0.0,
            frac_installed: 0.0,
            error: Some(e.to_string()),
            tally: EncodingTally::new(),
            encoding_errors: 0,
        },
    }
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Samples cases for every clique link, in link order.
pub fn sample_campaign(topology: &AsTopology, n_per_link: usize, seed: u64, parallelism: usize) -> Result<CaseSample> {
    let links = enumerate_t1_links(topology);
    let samples = pool(parallelism)?.install(|| {
        links
            .par_iter()
            .map(|&link| sample_leak_cases(topology, link, n_per_link, seed))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut all = CaseSample::default();
    for s in samples {
        all.cases.extend(s.cases);
        all.skips.extend(s.skips);
    }
    Ok(all)
}

/// Runs an already sampled set of cases under one scenario. Output order
/// follows case order regardless of `parallelism`.
pub fn run_cases(
    topology: &AsTopology,
    scenario: &ProtectionScenario,
    sample: &CaseSample,
    parallelism: usize,
) -> Result<CampaignReport> {
    let filter = scenario.compile(topology);
    let rows = pool(parallelism)?.install(|| {
        sample
            .cases
            .par_iter()
            .map(|case| evaluate_case(topology, &filter, case))
            .collect::<Vec<_>>()
    });
    Ok(CampaignReport {
        scenario: scenario.name.clone(),
        topology_size: topology.len(),
        rows,
        skips: sample.skips.clone(),
    })
}

/// Full campaign: every clique link times `n_per_link` sampled leakers.
pub fn run_campaign(
    topology: &AsTopology,
    scenario: &ProtectionScenario,
    n_per_link: usize,
    seed: u64,
    parallelism: usize,
) -> Result<CampaignReport> {
    let sample = sample_campaign(topology, n_per_link, seed, parallelism)?;
    log::info!(
        "scenario {}: {} cases, {} skips",
        scenario.name,
        sample.cases.len(),
        sample.skips.len()
    );
    run_cases(topology, scenario, &sample, parallelism)
}
