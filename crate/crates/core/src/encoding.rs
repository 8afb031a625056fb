// SPDX-License-Identifier: Apache-2.0

//! Leak-segment extraction and the two-character path encoding.
//!
//! A leak segment is the part of an exported leak path between the first
//! upward (or peer) hop and the leaker. Each AS in it becomes a token: its
//! UCLA class character followed by what it is to the next AS toward the
//! leaker (`P` provider, `R` peer, `C` customer).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::topology::{AsTopology, NeighborKind, UclaClass};
use crate::types::Asn;

/// Relationship of a segment AS to the next AS toward the leaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkRole {
    Provider,
    Peer,
    Customer,
}

impl LinkRole {
    pub fn code(self) -> char {
        match self {
            LinkRole::Provider => 'P',
            LinkRole::Peer => 'R',
            LinkRole::Customer => 'C',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'P' => Some(LinkRole::Provider),
            'R' => Some(LinkRole::Peer),
            'C' => Some(LinkRole::Customer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token {
    pub class: UclaClass,
    pub role: LinkRole,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.class.code(), self.role.code())
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.trim().chars();
        let bad = || Error::Format(format!("bad encoding token {s:?}"));
        let class = chars.next().and_then(UclaClass::from_code).ok_or_else(bad)?;
        let role = chars.next().and_then(LinkRole::from_code).ok_or_else(bad)?;
        if chars.next().is_some() {
            return Err(bad());
        }
        Ok(Token { class, role })
    }
}

/// Token sequence, leftmost token furthest from the leaker. Renders as
/// `[LR, TP]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Encoding(pub Vec<Token>);

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| Error::Format(format!("bad encoding {s:?}")))?;
        if inner.trim().is_empty() {
            return Ok(Encoding::default());
        }
        inner.split(',').map(str::parse).collect::<Result<_>>().map(Encoding)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakSegment {
    /// Furthest encoded AS first; the leaker is not included.
    pub asns: Vec<Asn>,
    pub encoding: Encoding,
}

/// Extracts and encodes the leak segment of an exported leak path.
pub fn leak_segment(as_path: &[Asn], leaker: Asn, topology: &AsTopology) -> Result<LeakSegment> {
    let at = as_path
        .iter()
        .position(|&a| a == leaker)
        .ok_or(Error::LeakerNotOnPath { leaker })?;
    // each AS paired with the next AS toward the leaker
    let hops: Vec<(Asn, Asn)> = (0..at).map(|i| (as_path[i], as_path[i + 1])).collect();
    let roles = hops
        .iter()
        .map(|&(a, next)| role_of(topology, a, next))
        .collect::<Result<Vec<_>>>()?;

    let start = roles
        .iter()
        .position(|&r| r != LinkRole::Customer)
        .unwrap_or(roles.len());
    if let Some(i) = roles[start..].iter().position(|&r| r == LinkRole::Customer) {
        return Err(Error::DownStepInSegment(hops[start + i].0));
    }
    let asns: Vec<Asn> = hops[start..].iter().map(|&(a, _)| a).collect();
    let encoding = encode_segment(&asns, leaker, topology)?;
    Ok(LeakSegment { asns, encoding })
}

/// Encodes segment ASes given in path order, each relative to its right
/// neighbor (the last one relative to the leaker). Customer tokens are
/// emitted as-is.
pub fn encode_segment(asns: &[Asn], leaker: Asn, topology: &AsTopology) -> Result<Encoding> {
    asns.iter()
        .enumerate()
        .map(|(i, &a)| {
            let next = asns.get(i + 1).copied().unwrap_or(leaker);
            Ok(Token {
                class: topology.ucla_class(a)?,
                role: role_of(topology, a, next)?,
            })
        })
        .collect::<Result<_>>()
        .map(Encoding)
}

fn role_of(topology: &AsTopology, a: Asn, next: Asn) -> Result<LinkRole> {
    // `a`'s role is the inverse of what `next` is to `a`
    match topology.relationship(a, next) {
        Some(NeighborKind::Customer) => Ok(LinkRole::Provider),
        Some(NeighborKind::Peer) => Ok(LinkRole::Peer),
        Some(NeighborKind::Provider) => Ok(LinkRole::Customer),
        None => Err(Error::MissingLink(a, next)),
    }
}

/// Per-class segment transit statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassTransit {
    /// Percentage of segments containing at least one member.
    pub pct_segments: f64,
    pub mean_members: f64,
    pub std_members: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats {
    pub segments: u64,
    pub mean_length: f64,
    pub std_length: f64,
    pub by_class: BTreeMap<UclaClass, ClassTransit>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn add(&mut self, x: f64, weight: u64) {
        self.n += weight;
        self.sum += x * weight as f64;
        self.sum_sq += x * x * weight as f64;
    }

    fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Population standard deviation.
    fn std(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.sum_sq / self.n as f64 - m * m).max(0.0).sqrt()
    }
}

/// Streaming accumulator for encoding frequencies and segment statistics.
/// One segment is added per (case, exporting AS).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodingTally {
    counts: BTreeMap<Encoding, u64>,
    length: Moments,
    class_members: BTreeMap<UclaClass, Moments>,
    class_hits: BTreeMap<UclaClass, u64>,
}

impl EncodingTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, segment: &LeakSegment) {
        self.add_encoding(&segment.encoding, 1);
    }

    /// Adds `count` segments with the same encoding. Statistics depend only
    /// on the encoding, so tallies can be rebuilt from a report.
    pub fn add_encoding(&mut self, encoding: &Encoding, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(encoding.clone()).or_default() += count;
        self.length.add(encoding.0.len() as f64, count);
        for class in UclaClass::ALL {
            let members = encoding.0.iter().filter(|t| t.class == class).count();
            self.class_members.entry(class).or_default().add(members as f64, count);
            if members > 0 {
                *self.class_hits.entry(class).or_default() += count;
            }
        }
    }

    pub fn merge(&mut self, other: &EncodingTally) {
        for (e, c) in &other.counts {
            *self.counts.entry(e.clone()).or_default() += c;
        }
        self.length.merge(&other.length);
        for (class, m) in &other.class_members {
            self.class_members.entry(*class).or_default().merge(m);
        }
        for (class, h) in &other.class_hits {
            *self.class_hits.entry(*class).or_default() += h;
        }
    }

    /// Number of segments added, i.e. the exporting-AS total.
    pub fn total(&self) -> u64 {
        self.length.n
    }

    pub fn counts(&self) -> &BTreeMap<Encoding, u64> {
        &self.counts
    }

    /// `(encoding, count, percent of total)`, most frequent first; ties in
    /// encoding order.
    pub fn table(&self) -> Vec<(Encoding, u64, f64)> {
        let total = self.total().max(1) as f64;
        let mut rows: Vec<_> = self
            .counts
            .iter()
            .map(|(e, &c)| (e.clone(), c, 100.0 * c as f64 / total))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        rows
    }

    pub fn stats(&self) -> SegmentStats {
        let n = self.total().max(1) as f64;
        let by_class = UclaClass::ALL
            .into_iter()
            .map(|class| {
                let m = self.class_members.get(&class).copied().unwrap_or_default();
                let hits = self.class_hits.get(&class).copied().unwrap_or(0);
                let transit = ClassTransit {
                    pct_segments: if self.total() == 0 {
                        0.0
                    } else {
                        100.0 * hits as f64 / n
                    },
                    mean_members: m.mean(),
                    std_members: m.std(),
                };
                (class, transit)
            })
            .collect();
        SegmentStats {
            segments: self.total(),
            mean_length: self.length.mean(),
            std_length: self.length.std(),
            by_class,
        }
    }
}

/// Segments and tallies a set of `(exporter, exported path)` pairs from one
/// leak.
pub fn tabulate_encodings<'a>(
    exports: impl IntoIterator<Item = &'a [Asn]>,
    leaker: Asn,
    topology: &AsTopology,
) -> Result<EncodingTally> {
    let mut tally = EncodingTally::new();
    for path in exports {
        tally.add(&leak_segment(path, leaker, topology)?);
    }
    Ok(tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::RelationshipGraph;

    fn a(v: &[u32]) -> Vec<Asn> {
        v.iter().map(|&x| Asn(x)).collect()
    }

    // 1: Tier-1 provider of leaker 10; 2: large ISP peering with 1; 3: stub
    // customer of 2; 4 peers with the leaker; 20: destination below 30
    fn fixture() -> AsTopology {
        let mut text = String::from("1|10|-1\n1|2|0\n2|3|-1\n4|10|0\n1|30|-1\n30|20|-1\n");
        for c in 100..160 {
            text.push_str(&format!("2|{c}|-1\n"));
        }
        let graph = RelationshipGraph::parse(&text).unwrap();
        let clique = [Asn(1)].into_iter().collect();
        AsTopology::build(&graph, Some(&clique)).unwrap()
    }

    #[test]
    fn tokens_render_class_then_relationship() {
        let t = fixture();
        let seg = leak_segment(&a(&[3, 2, 1, 10, 1, 30, 20]), Asn(10), &t).unwrap();
        assert_eq!(seg.asns, a(&[2, 1]));
        assert_eq!(seg.encoding.to_string(), "[LR, TP]");
    }

    #[test]
    fn leaker_direct_export_is_empty() {
        let t = fixture();
        let seg = leak_segment(&a(&[10, 1, 30, 20]), Asn(10), &t).unwrap();
        assert!(seg.asns.is_empty());
        assert_eq!(seg.encoding.to_string(), "[]");
    }

    #[test]
    fn single_provider_hop() {
        let t = fixture();
        let seg = leak_segment(&a(&[1, 10, 1, 30, 20]), Asn(10), &t).unwrap();
        assert_eq!(seg.encoding.to_string(), "[TP]");
    }

    #[test]
    fn missing_leaker_and_valleys_are_errors() {
        let t = fixture();
        assert!(matches!(
            leak_segment(&a(&[1, 30, 20]), Asn(10), &t),
            Err(Error::LeakerNotOnPath { .. })
        ));
        // 2 is the provider of 3, then 3 is the customer of 2: a valley
        assert!(matches!(
            leak_segment(&a(&[2, 3, 2, 1, 10]), Asn(10), &t),
            Err(Error::DownStepInSegment(_))
        ));
        assert!(matches!(
            leak_segment(&a(&[4, 1, 10]), Asn(10), &t),
            Err(Error::MissingLink(..))
        ));
    }

    #[test]
    fn encoding_round_trips_through_text() {
        for s in ["[]", "[LR, TP]", "[UC]", "[SP, SP, LR]"] {
            assert_eq!(s.parse::<Encoding>().unwrap().to_string(), s);
        }
        assert!("LR, TP".parse::<Encoding>().is_err());
        assert!("[XR]".parse::<Encoding>().is_err());
    }

    #[test]
    fn tally_statistics_match_hand_arithmetic() {
        let t = fixture();
        let paths = [a(&[2, 1, 10]), a(&[1, 10]), a(&[10]), a(&[3, 2, 1, 10])];
        let tally = tabulate_encodings(paths.iter().map(|p| &p[..]), Asn(10), &t).unwrap();
        assert_eq!(tally.total(), 4);
        let table = tally.table();
        assert_eq!(table[0].0.to_string(), "[LR, TP]");
        assert_eq!(table[0].1, 2);
        assert!((table[0].2 - 50.0).abs() < 1e-12);
        let stats = tally.stats();
        // lengths 2, 1, 0, 2
        assert!((stats.mean_length - 1.25).abs() < 1e-12);
        let var: f64 = [2.0, 1.0, 0.0, 2.0]
            .iter()
            .map(|x: &f64| (x - 1.25).powi(2))
            .sum::<f64>()
            / 4.0;
        assert!((stats.std_length - var.sqrt()).abs() < 1e-12);
        let t1 = stats.by_class[&UclaClass::Tier1];
        assert!((t1.pct_segments - 75.0).abs() < 1e-12);
        assert!((t1.mean_members - 0.75).abs() < 1e-12);
        let large = stats.by_class[&UclaClass::LargeIsp];
        assert!((large.pct_segments - 50.0).abs() < 1e-12);
    }

    #[test]
    fn counted_encodings_equal_repeated_segments() {
        let t = fixture();
        let seg = leak_segment(&a(&[2, 1, 10]), Asn(10), &t).unwrap();
        let mut repeated = EncodingTally::new();
        for _ in 0..3 {
            repeated.add(&seg);
        }
        let mut counted = EncodingTally::new();
        counted.add_encoding(&seg.encoding, 3);
        assert_eq!(repeated, counted);
    }

    #[test]
    fn merged_tallies_equal_single_tally() {
        let t = fixture();
        let paths = [a(&[2, 1, 10]), a(&[1, 10]), a(&[10])];
        let whole = tabulate_encodings(paths.iter().map(|p| &p[..]), Asn(10), &t).unwrap();
        let mut left = tabulate_encodings(paths[..1].iter().map(|p| &p[..]), Asn(10), &t).unwrap();
        let right = tabulate_encodings(paths[1..].iter().map(|p| &p[..]), Asn(10), &t).unwrap();
        left.merge(&right);
        assert_eq!(left, whole);
    }
}
