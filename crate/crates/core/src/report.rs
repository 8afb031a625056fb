// SPDX-License-Identifier: Apache-2.0

//! On-disk report formats.
//!
//! Every file starts with a provenance comment line
//! `# leaksim <version> format=<n> config=<digest>` followed by either a CSV
//! header or, for observations, pipe-delimited records.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use crate::campaign::{CampaignReport, Metric, SkipRecord};
use crate::encoding::{Encoding, EncodingTally};
use crate::error::{Error, Result};
use crate::filters::DropReason;
use crate::inference::{Emulation, InferenceReport, ObservedUpdate, Phase, SetScore};
use crate::topology::{AsTopology, UclaClass};
use crate::types::Asn;

/// Bumped whenever a column or record layout changes.
pub const FORMAT_VERSION: u32 = 1;

/// Provenance stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub version: String,
    pub config_digest: String,
}

impl Provenance {
    pub fn new(config_digest: impl Into<String>) -> Self {
        Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config_digest.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "# leaksim {} format={} config={}",
            self.version, FORMAT_VERSION, self.config_digest
        )
    }

    /// Parses a provenance line, rejecting other tools and formats.
    pub fn parse(line: &str) -> Result<Self> {
        let bad = || Error::Format(format!("missing or foreign provenance line {line:?}"));
        let mut words = line
            .trim()
            .strip_prefix("# leaksim ")
            .ok_or_else(bad)?
            .split_whitespace();
        let version = words.next().ok_or_else(bad)?.to_string();
        let format: u32 = words
            .next()
            .and_then(|w| w.strip_prefix("format="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)?;
        if format != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "report format {format} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let config_digest = words
            .next()
            .and_then(|w| w.strip_prefix("config="))
            .ok_or_else(bad)?
            .to_string();
        Ok(Provenance { version, config_digest })
    }
}

fn float(x: f64) -> String {
    format!("{x:.6}")
}

fn csv_writer<W: Write>(mut out: W, provenance: &Provenance, header: &[&str]) -> Result<csv::Writer<W>> {
    writeln!(out, "{}", provenance.line())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

/// Reads a CSV report: checks provenance, then returns the header and the
/// data records.
pub fn read_csv(mut input: impl BufRead) -> Result<(Provenance, Vec<String>, Vec<csv::StringRecord>)> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let provenance = Provenance::parse(&first)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let records = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((provenance, header, records))
}

fn expect_header(header: &[String], expected: &[&str]) -> Result<()> {
    if header.iter().map(String::as_str).eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "unexpected columns {header:?}, expected {expected:?}"
        )))
    }
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize) -> Result<T> {
    record
        .get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad field {i} in record {record:?}")))
}

pub const CASE_COLUMNS: [&str; 9] = [
    "link_start",
    "link_end",
    "leaker",
    "destination",
    "n_received",
    "n_installed",
    "frac_received",
    "frac_installed",
    "status",
];

pub fn write_cases(out: impl Write, provenance: &Provenance, report: &CampaignReport) -> Result<()> {
    let mut w = csv_writer(out, provenance, &CASE_COLUMNS)?;
    for row in &report.rows {
        let c = &row.case;
        w.write_record([
            c.link_start.to_string(),
            c.link_end.to_string(),
            c.leaker.to_string(),
            c.destination.to_string(),
            row.n_received.to_string(),
            row.n_installed.to_string(),
            float(row.frac_received),
            float(row.frac_installed),
            row.status(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_skips(out: impl Write, provenance: &Provenance, skips: &[SkipRecord]) -> Result<()> {
    let mut w = csv_writer(
        out,
        provenance,
        &["link_start", "link_end", "leaker", "reason", "attempts"],
    )?;
    for s in skips {
        w.write_record([
            s.link_start.to_string(),
            s.link_end.to_string(),
            s.leaker.map(|a| a.to_string()).unwrap_or_default(),
            s.reason.to_string(),
            s.attempts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf(out: impl Write, provenance: &Provenance, report: &CampaignReport) -> Result<()> {
    let mut w = csv_writer(out, provenance, &["scenario", "metric", "x", "y"])?;
    for metric in Metric::ALL {
        for (x, y) in report.cdf(metric) {
            w.write_record([report.scenario.as_str(), metric.name(), &float(x), &float(y)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Headline campaign figures as `scenario,metric,value`.
pub fn write_campaign_summary(out: impl Write, provenance: &Provenance, report: &CampaignReport) -> Result<()> {
    let mut w = csv_writer(out, provenance, &["scenario", "metric", "value"])?;
    let completed = report.completed().count();
    let encoding_errors: u64 = report.completed().map(|r| r.encoding_errors).sum();
    let rows = [
        ("topology_size", report.topology_size.to_string()),
        ("cases", report.rows.len().to_string()),
        ("completed", completed.to_string()),
        ("failed", report.failed().to_string()),
        ("skipped", report.skips.len().to_string()),
        ("fully_mitigated_fraction", float(report.fully_mitigated_fraction())),
        (
            "received_beyond_10pct_fraction",
            float(report.spread_beyond_fraction(Metric::Received, 0.10)),
        ),
        (
            "installed_beyond_10pct_fraction",
            float(report.spread_beyond_fraction(Metric::Installed, 0.10)),
        ),
        ("mean_frac_received", float(report.mean_fraction(Metric::Received))),
        ("mean_frac_installed", float(report.mean_fraction(Metric::Installed))),
        ("total_installed", report.total_installed().to_string()),
        ("exporting_total", report.exporting_total().to_string()),
        ("encoding_errors", encoding_errors.to_string()),
    ];
    for (metric, value) in rows {
        w.write_record([report.scenario.as_str(), metric, &value])?;
    }
    w.flush()?;
    Ok(())
}

pub const ENCODING_COLUMNS: [&str; 4] = ["scenario", "case", "encoding", "count"];

/// Per-case encoding counts, the input of the encoding reports.
pub fn write_case_encodings(out: impl Write, provenance: &Provenance, report: &CampaignReport) -> Result<()> {
    let mut w = csv_writer(out, provenance, &ENCODING_COLUMNS)?;
    for (i, row) in report.rows.iter().enumerate() {
        if !row.is_ok() {
            continue;
        }
        for (encoding, count) in row.tally.counts() {
            w.write_record([
                report.scenario.clone(),
                i.to_string(),
                encoding.to_string(),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds per-scenario tallies from per-case encoding files, in first-seen
/// scenario order.
pub fn read_case_encodings(input: impl BufRead) -> Result<Vec<(String, EncodingTally)>> {
    let (_, header, records) = read_csv(input)?;
    expect_header(&header, &ENCODING_COLUMNS)?;
    let mut out: Vec<(String, EncodingTally)> = Vec::new();
    for r in &records {
        let scenario: String = field(r, 0)?;
        let encoding: Encoding = r
            .get(2)
            .ok_or_else(|| Error::Format("missing encoding".into()))?
            .parse()?;
        let count: u64 = field(r, 3)?;
        let slot = match out.iter().position(|(s, _)| *s == scenario) {
            Some(i) => i,
            None => {
                out.push((scenario, EncodingTally::new()));
                out.len() - 1
            }
        };
        out[slot].1.add_encoding(&encoding, count);
    }
    Ok(out)
}

/// Scenario named by a campaign summary file.
pub fn read_summary_scenario(input: impl BufRead) -> Result<String> {
    let (_, header, records) = read_csv(input)?;
    expect_header(&header, &["scenario", "metric", "value"])?;
    let first = records
        .first()
        .ok_or_else(|| Error::Format("empty campaign summary".into()))?;
    field(first, 0)
}

/// Encoding frequency table with a closing total row.
pub fn write_encoding_table(
    out: impl Write,
    provenance: &Provenance,
    tallies: &[(String, EncodingTally)],
) -> Result<()> {
    let mut w = csv_writer(out, provenance, &["scenario", "encoding", "count", "pct"])?;
    for (scenario, tally) in tallies {
        for (encoding, count, pct) in tally.table() {
            w.write_record([scenario.clone(), encoding.to_string(), count.to_string(), float(pct)])?;
        }
        let pct = if tally.total() == 0 { 0.0 } else { 100.0 };
        w.write_record([scenario.clone(), "total".into(), tally.total().to_string(), float(pct)])?;
    }
    w.flush()?;
    Ok(())
}

/// Segment statistics; the stub columns are auxiliary.
pub fn write_segment_stats(
    out: impl Write,
    provenance: &Provenance,
    tallies: &[(String, EncodingTally)],
) -> Result<()> {
    let mut header = vec![
        "scenario".to_string(),
        "segments".into(),
        "seg_len_mean".into(),
        "seg_len_std".into(),
    ];
    for class in UclaClass::ALL {
        for stat in ["pct", "mean", "std"] {
            header.push(format!("{}_{stat}", class.name()));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = csv_writer(out, provenance, &header)?;
    for (scenario, tally) in tallies {
        let stats = tally.stats();
        let mut record = vec![
            scenario.clone(),
            stats.segments.to_string(),
            float(stats.mean_length),
            float(stats.std_length),
        ];
        for class in UclaClass::ALL {
            let t = stats.by_class[&class];
            record.extend([float(t.pct_segments), float(t.mean_members), float(t.std_members)]);
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

const OBSERVATIONS_HEADER: &str = "# leaksim observations v1";

/// Observation stream: provenance, a format marker, then one
/// `phase|collector|as_path` record per line with space-separated ASNs.
pub fn write_observations(mut out: impl Write, provenance: &Provenance, updates: &[ObservedUpdate]) -> Result<()> {
    writeln!(out, "{}", provenance.line())?;
    writeln!(out, "{OBSERVATIONS_HEADER}")?;
    for u in updates {
        let path: Vec<String> = u.as_path.iter().map(Asn::to_string).collect();
        writeln!(out, "{}|{}|{}", u.phase, u.collector, path.join(" "))?;
    }
    Ok(())
}

/// Reads observations. Comment lines are skipped, so externally captured
/// files need neither the provenance nor the marker line.
pub fn read_observations(input: impl BufRead) -> Result<Vec<ObservedUpdate>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        let [phase, collector, path] = fields[..] else {
            return Err(Error::parse(i + 1, "expected phase|collector|as_path"));
        };
        let phase: Phase = phase
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("unknown phase {phase:?}")))?;
        let collector: Asn = collector
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad collector {collector:?}")))?;
        let as_path = path
            .split_whitespace()
            .map(|a| {
                a.parse::<Asn>()
                    .map_err(|_| Error::parse(i + 1, format!("bad ASN {a:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if as_path.is_empty() {
            return Err(Error::parse(i + 1, "empty AS path"));
        }
        out.push(ObservedUpdate {
            phase,
            collector,
            as_path,
        });
    }
    Ok(out)
}

pub const TRUTH_COLUMNS: [&str; 7] = [
    "phase",
    "asn",
    "heard",
    "loop_detection",
    "peerlock",
    "peerlock_lite",
    "poison_filter",
];

/// Per-phase ground truth: every AS that heard an update or dropped one.
pub fn write_truth(out: impl Write, provenance: &Provenance, emulation: &Emulation) -> Result<()> {
    let mut w = csv_writer(out, provenance, &TRUTH_COLUMNS)?;
    for (phase, truth) in &emulation.truth {
        let asns: BTreeSet<Asn> = truth.heard.iter().chain(truth.drops.keys()).copied().collect();
        for asn in asns {
            let counts = truth.drops.get(&asn).copied().unwrap_or_default();
            let mut record = vec![
                phase.to_string(),
                asn.to_string(),
                u8::from(truth.heard.contains(&asn)).to_string(),
            ];
            record.extend(DropReason::ALL.iter().map(|&r| counts.get(r).to_string()));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Leak-phase droppers from a ground-truth file, `exclude` aside.
pub fn read_truth_filterers(input: impl BufRead, exclude: Option<Asn>) -> Result<BTreeSet<Asn>> {
    let (_, header, records) = read_csv(input)?;
    expect_header(&header, &TRUTH_COLUMNS)?;
    let mut out = BTreeSet::new();
    for r in &records {
        let phase: Phase = field::<String>(r, 0)?.parse()?;
        let asn: Asn = field(r, 1)?;
        let drops: u32 = (3..7).map(|i| field::<u32>(r, i)).sum::<Result<u32>>()?;
        if phase == Phase::Leak && drops > 0 && Some(asn) != exclude {
            out.insert(asn);
        }
    }
    Ok(out)
}

/// Set memberships as `member` rows followed by `size` summary rows.
pub fn write_inference(out: impl Write, provenance: &Provenance, report: &InferenceReport) -> Result<()> {
    let mut w = csv_writer(out, provenance, &["kind", "set", "value"])?;
    for (name, set) in report.sets() {
        for asn in set {
            w.write_record(["member", name, &asn.to_string()])?;
        }
    }
    for (name, set) in report.sets() {
        w.write_record(["size", name, &set.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores(out: impl Write, provenance: &Provenance, scores: &[SetScore]) -> Result<()> {
    let mut w = csv_writer(
        out,
        provenance,
        &["set", "precision", "recall", "size", "true_positives", "truth_size"],
    )?;
    for s in scores {
        w.write_record([
            s.set.to_string(),
            float(s.precision),
            float(s.recall),
            s.size.to_string(),
            s.true_positives.to_string(),
            s.truth_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-AS classification.
pub fn write_classes(out: impl Write, provenance: &Provenance, topology: &AsTopology) -> Result<()> {
    let mut w = csv_writer(out, provenance, &["asn", "class", "cone_size", "clique"])?;
    for &asn in topology.asns() {
        w.write_record([
            asn.to_string(),
            topology.ucla_class(asn)?.name().to_string(),
            topology.cone_size(asn)?.to_string(),
            u8::from(topology.clique().contains(&asn)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Class counts, clique size and membership as `metric,value`.
pub fn write_class_summary(out: impl Write, provenance: &Provenance, topology: &AsTopology) -> Result<()> {
    let mut w = csv_writer(out, provenance, &["metric", "value"])?;
    w.write_record(["ases", &topology.len().to_string()])?;
    for (class, count) in topology.class_counts() {
        w.write_record([class.name(), &count.to_string()])?;
    }
    w.write_record(["clique_size", &topology.clique().len().to_string()])?;
    let members: Vec<String> = topology.clique().iter().map(Asn::to_string).collect();
    w.write_record(["clique_members", &members.join(" ")])?;
    w.flush()?;
    Ok(())
}

/// Histogram of customer cone sizes.
pub fn write_cone_distribution(out: impl Write, provenance: &Provenance, topology: &AsTopology) -> Result<()> {
    let mut hist = std::collections::BTreeMap::<usize, usize>::new();
    for &asn in topology.asns() {
        *hist.entry(topology.cone_size(asn)?).or_default() += 1;
    }
    let mut w = csv_writer(out, provenance, &["cone_size", "count"])?;
    for (size, count) in hist {
        w.write_record([size.to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_round_trips_and_rejects_other_formats() {
        let p = Provenance::new("abc123");
        assert_eq!(Provenance::parse(&p.line()).unwrap(), p);
        let future = p.line().replace("format=1", "format=9");
        assert!(matches!(Provenance::parse(&future), Err(Error::Format(_))));
        assert!(Provenance::parse("asn,class").is_err());
    }

    #[test]
    fn observations_round_trip() {
        let updates = vec![
            ObservedUpdate {
                phase: Phase::Control,
                collector: Asn(3),
                as_path: vec![Asn(3), Asn(2), Asn(1), Asn(99), Asn(1)],
            },
            ObservedUpdate {
                phase: Phase::Leak,
                collector: Asn(2),
                as_path: vec![Asn(2), Asn(1)],
            },
        ];
        let mut buf = Vec::new();
        write_observations(&mut buf, &Provenance::new("d"), &updates).unwrap();
        assert_eq!(read_observations(&buf[..]).unwrap(), updates);
        assert!(read_observations(&b"leak|2\n"[..]).is_err());
        assert!(read_observations(&b"later|2|2 1\n"[..]).is_err());
    }

    #[test]
    fn case_encodings_round_trip_into_tallies() {
        let mut tally = EncodingTally::new();
        tally.add_encoding(&"[LR, TP]".parse().unwrap(), 3);
        tally.add_encoding(&"[]".parse().unwrap(), 1);
        let text = format!(
            "{}\nscenario,case,encoding,count\nnone,0,\"[LR, TP]\",2\nnone,1,\"[LR, TP]\",1\nnone,1,[],1\n",
            Provenance::new("d").line()
        );
        let read = read_case_encodings(text.as_bytes()).unwrap();
        assert_eq!(read, vec![("none".to_string(), tally)]);
    }
}
