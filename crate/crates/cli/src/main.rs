// SPDX-License-Identifier: Apache-2.0

//! `leaksim`: classify topologies, run leak campaigns, build encoding
//! reports, emulate measurements and infer filterers.

mod config;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use leaksim::campaign::run_campaign;
use leaksim::encoding::EncodingTally;
use leaksim::filters::{build_scenario, parse_rule_file, ScenarioName};
use leaksim::inference::{emulate_measurement, infer, score_inference};
use leaksim::report::{self, Provenance};
use leaksim::topology::{AsTopology, RelationshipGraph};
use leaksim::types::parse_asn_list;
use leaksim::Asn;

use config::{read_input, ConfigDigest};

#[derive(Debug, Parser)]
#[command(name = "leaksim", version, about = "AS-level BGP route-leak simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report UCLA classes, the Tier-1 clique and cone sizes.
    Classify(ClassifyArgs),
    /// Simulate Tier-1 route leaks under one protection scenario.
    Campaign(CampaignArgs),
    /// Build encoding and segment tables from campaign reports.
    Encode(EncodeArgs),
    /// Emulate a poisoning measurement for one origin and target.
    Emulate(EmulateArgs),
    /// Infer filterers from observed updates.
    Infer(InferArgs),
}

#[derive(Debug, Args)]
struct TopologyArgs {
    /// CAIDA serial-2 relationship file.
    #[arg(long)]
    topology: PathBuf,
    /// Whitespace-separated clique ASNs overriding the file header.
    #[arg(long)]
    clique: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Protection scenario name.
    #[arg(long, default_value = "none")]
    scenario: String,
    /// Peerlock rule file (`protector protected` per line).
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    topology: TopologyArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    #[command(flatten)]
    topology: TopologyArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Leakers sampled per clique link.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; does not affect results.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// Campaign output directory; repeat for several scenarios.
    #[arg(long, required = true)]
    report: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EmulateArgs {
    #[command(flatten)]
    topology: TopologyArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    origin: Asn,
    #[arg(long)]
    target: Asn,
    /// `all`, or a file listing collector ASNs.
    #[arg(long, default_value = "all")]
    collectors: String,
    /// Poison used by the control phase; defaults to one above the largest
    /// ASN in the topology.
    #[arg(long)]
    sentinel: Option<Asn>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    topology: TopologyArgs,
    /// Observation file in the `phase|collector|as_path` format.
    #[arg(long)]
    observations: PathBuf,
    /// Ground-truth file from `emulate`; enables scoring.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Output files are rendered fully in memory before anything is written.
struct Outputs {
    dir: PathBuf,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &'static str, render: impl FnOnce(&mut Vec<u8>) -> leaksim::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        render(&mut buf).with_context(|| format!("rendering {name}"))?;
        self.files.push((name, buf));
        Ok(())
    }

    fn commit(self) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("cannot create {}", self.dir.display()))?;
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            let mut f =
                BufWriter::new(File::create(&path).with_context(|| format!("cannot write {}", path.display()))?);
            f.write_all(&bytes)?;
            f.flush()?;
            log::info!("wrote {} ({} bytes)", path.display(), bytes.len());
        }
        Ok(())
    }
}

fn load_topology(args: &TopologyArgs, digest: &mut ConfigDigest) -> Result<AsTopology> {
    let text = read_input(&args.topology)?;
    digest.file("topology", &text);
    let graph =
        RelationshipGraph::from_reader(&text[..]).with_context(|| format!("parsing {}", args.topology.display()))?;
    let clique = match &args.clique {
        Some(path) => {
            let bytes = read_input(path)?;
            digest.file("clique", &bytes);
            let list = parse_asn_list(&String::from_utf8_lossy(&bytes))
                .with_context(|| format!("parsing {}", path.display()))?;
            Some(list.into_iter().collect::<BTreeSet<Asn>>())
        }
        None => {
            digest.field("clique", "-");
            None
        }
    };
    AsTopology::build(&graph, clique.as_ref()).context("building topology")
}

fn load_scenario(
    args: &ScenarioArgs,
    topology: &AsTopology,
    digest: &mut ConfigDigest,
) -> Result<leaksim::filters::ProtectionScenario> {
    let name: ScenarioName = args.scenario.parse()?;
    digest.field("scenario", name);
    let rules = match &args.rules {
        Some(path) => {
            let bytes = read_input(path)?;
            digest.file("rules", &bytes);
            Some(
                parse_rule_file(&String::from_utf8_lossy(&bytes))
                    .with_context(|| format!("parsing {}", path.display()))?,
            )
        }
        None => {
            digest.field("rules", "-");
            None
        }
    };
    Ok(build_scenario(name, topology, rules.as_deref())?)
}

fn classify(args: &ClassifyArgs) -> Result<()> {
    let mut digest = ConfigDigest::new("classify");
    let topology = load_topology(&args.topology, &mut digest)?;
    let p = Provenance::new(digest.finish());
    let mut out = Outputs::new(&args.out);
    out.add("classes.csv", |b| report::write_classes(b, &p, &topology))?;
    out.add("summary.csv", |b| report::write_class_summary(b, &p, &topology))?;
    out.add("cone_sizes.csv", |b| report::write_cone_distribution(b, &p, &topology))?;
    out.commit()
}

fn campaign(args: &CampaignArgs) -> Result<()> {
    let mut digest = ConfigDigest::new("campaign");
    let topology = load_topology(&args.topology, &mut digest)?;
    let scenario = load_scenario(&args.scenario, &topology, &mut digest)?;
    digest.field("samples", args.samples).field("seed", args.seed);
    let p = Provenance::new(digest.finish());

    let result = run_campaign(&topology, &scenario, args.samples, args.seed, args.jobs)?;
    let mut out = Outputs::new(&args.out);
    out.add("cases.csv", |b| report::write_cases(b, &p, &result))?;
    out.add("skips.csv", |b| report::write_skips(b, &p, &result.skips))?;
    out.add("cdf.csv", |b| report::write_cdf(b, &p, &result))?;
    out.add("summary.csv", |b| report::write_campaign_summary(b, &p, &result))?;
    out.add("encodings.csv", |b| report::write_case_encodings(b, &p, &result))?;
    out.commit()?;

    if result.failed() > 0 {
        bail!(
            "{} of {} cases failed; see cases.csv",
            result.failed(),
            result.rows.len()
        );
    }
    Ok(())
}

fn encode(args: &EncodeArgs) -> Result<()> {
    let mut digest = ConfigDigest::new("encode");
    let mut tallies: Vec<(String, EncodingTally)> = Vec::new();
    for dir in &args.report {
        let path = dir.join("encodings.csv");
        let bytes = read_input(&path)?;
        digest.file("report", &bytes);
        let mut read =
            report::read_case_encodings(&bytes[..]).with_context(|| format!("reading {}", path.display()))?;
        if read.is_empty() {
            // no case exported anything; the summary still names the scenario
            let path = dir.join("summary.csv");
            let scenario = report::read_summary_scenario(&read_input(&path)?[..])
                .with_context(|| format!("reading {}", path.display()))?;
            read.push((scenario, EncodingTally::new()));
        }
        for (scenario, tally) in read {
            match tallies.iter_mut().find(|(s, _)| *s == scenario) {
                Some((_, merged)) => merged.merge(&tally),
                None => tallies.push((scenario, tally)),
            }
        }
    }
    let p = Provenance::new(digest.finish());
    let mut out = Outputs::new(&args.out);
    out.add("encodings_table.csv", |b| report::write_encoding_table(b, &p, &tallies))?;
    out.add("segment_stats.csv", |b| report::write_segment_stats(b, &p, &tallies))?;
    out.commit()
}

fn emulate(args: &EmulateArgs) -> Result<()> {
    let mut digest = ConfigDigest::new("emulate");
    let topology = load_topology(&args.topology, &mut digest)?;
    let scenario = load_scenario(&args.scenario, &topology, &mut digest)?;
    let collectors: BTreeSet<Asn> = if args.collectors == "all" {
        digest.field("collectors", "all");
        topology.asns().iter().copied().collect()
    } else {
        let bytes = read_input(Path::new(&args.collectors))?;
        digest.file("collectors", &bytes);
        parse_asn_list(&String::from_utf8_lossy(&bytes))?.into_iter().collect()
    };
    let sentinel = match args.sentinel {
        Some(s) => s,
        None => {
            let max = topology.asns().last().map_or(0, |a| a.get());
            let above_rules = scenario.mentioned_asns().last().map_or(0, |a| a.get());
            Asn(max.max(above_rules).checked_add(1).context("no free sentinel ASN")?)
        }
    };
    digest
        .field("origin", args.origin)
        .field("target", args.target)
        .field("sentinel", sentinel);
    let p = Provenance::new(digest.finish());

    let emulation = emulate_measurement(&topology, &scenario, args.origin, args.target, &collectors, sentinel)?;
    let mut out = Outputs::new(&args.out);
    out.add("observations.txt", |b| {
        report::write_observations(b, &p, &emulation.updates)
    })?;
    out.add("truth.csv", |b| report::write_truth(b, &p, &emulation))?;
    out.commit()
}

fn infer_cmd(args: &InferArgs) -> Result<()> {
    let mut digest = ConfigDigest::new("infer");
    let topology = load_topology(&args.topology, &mut digest)?;
    let bytes = read_input(&args.observations)?;
    digest.file("observations", &bytes);
    let updates =
        report::read_observations(&bytes[..]).with_context(|| format!("reading {}", args.observations.display()))?;
    if updates.is_empty() {
        bail!("{} holds no observations", args.observations.display());
    }
    let truth_bytes = match &args.truth {
        Some(path) => {
            let b = read_input(path)?;
            digest.file("truth", &b);
            Some(b)
        }
        None => None,
    };
    let p = Provenance::new(digest.finish());

    let inferred = infer(&updates, &topology);
    let mut out = Outputs::new(&args.out);
    out.add("inference.csv", |b| report::write_inference(b, &p, &inferred))?;
    if let Some(bytes) = truth_bytes {
        let origin = updates[0].as_path.last().copied();
        let truth = report::read_truth_filterers(&bytes[..], origin)?;
        let scores = score_inference(&inferred, &truth, topology.clique());
        out.add("scores.csv", |b| report::write_scores(b, &p, &scores))?;
    }
    out.commit()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Classify(a) => classify(&a),
        Command::Campaign(a) => campaign(&a),
        Command::Encode(a) => encode(&a),
        Command::Emulate(a) => emulate(&a),
        Command::Infer(a) => infer_cmd(&a),
    }
}
