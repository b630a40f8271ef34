//! The three subcommands. Every artifact embeds the tool version, the seed,
//! and a digest of the resolved inputs, and is byte-reproducible from them.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use spir_core::analyzer::{
    check_theorem_bounds, empirical_advantage, project_view, theorem_targets, BoundsReport,
    TheoremTargets, ViewProjection, DEFAULT_ALPHA,
};
use spir_core::orchestrator::{
    self, DcId, Outcome, Party, ProtocolKind, RunRecord, TranscriptMeta, TRANSCRIPT_FORMAT,
};
use spir_core::planner::{
    comm_cost, feasibility_curve, key_length, max_entry_size, scenario_by_name,
    scenario_presets, BlockStats, EpsilonBudget,
};

use crate::config::{self, FileConfig};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// run

#[derive(Args, Debug)]
pub struct RunArgs {
    /// TOML run configuration (see README for the schema)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config file's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config file's trial count
    #[arg(long)]
    pub trials: Option<u64>,
    /// Transcript output path (line-delimited JSON)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let file = config::load_file(&args.config)?;
    let batch = config::resolve_batch(&file, args.seed, args.trials)?;
    let records = orchestrator::run_batch(&batch)
        .map_err(|e| CliError::Data(format!("batch failed: {e}")))?;
    let meta = TranscriptMeta {
        format: TRANSCRIPT_FORMAT.into(),
        tool_version: VERSION.into(),
        seed: batch.seed,
        config_digest: config::digest_of(&batch),
        batch: batch.clone(),
    };
    let out = fs::File::create(&args.out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", args.out.display())))?;
    let mut out = BufWriter::new(out);
    orchestrator::write_transcript(&mut out, &meta, &records)
        .map_err(|e| CliError::Data(e.to_string()))?;
    out.flush()
        .map_err(|e| CliError::Data(format!("transcript write failed: {e}")))?;
    eprintln!(
        "wrote {} records to {} (seed {})",
        records.len(),
        args.out.display(),
        batch.seed
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Decode failures among non-aborted runs (zero tolerance)
    Correctness,
    /// Index-recovery advantage of each server+Eve coalition (needs --paired)
    UserPrivacy,
    /// Database-unmasking advantage of the user+Eve coalition (needs --paired)
    DbPrivacy,
    /// Wire-query recovery advantage of Eve alone (needs --paired)
    Secrecy,
    /// Correctness bound of the imperfect-key theorem, with margins
    Bounds,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Transcript to analyze
    pub transcript: PathBuf,
    /// Which security definition to check
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Second transcript run with the alternative target or database
    #[arg(long)]
    pub paired: Option<PathBuf>,
    /// Failure budget for the Hoeffding confidence margins
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Report output path, or - for stdout
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Serialize)]
struct CorrectnessReport {
    version: String,
    mode: &'static str,
    seed: u64,
    config_digest: String,
    n_runs: usize,
    aborted: usize,
    pass_runs: usize,
    decode_errors: usize,
    failure_rate: f64,
    pass: bool,
}

#[derive(Serialize)]
struct BoundsEnvelope {
    version: String,
    mode: &'static str,
    seed: u64,
    config_digest: String,
    report: BoundsReport,
}

#[derive(Serialize)]
struct CheckOutcome {
    name: &'static str,
    estimate: f64,
    margin: f64,
    bound: f64,
    n_train: usize,
    n_eval: usize,
    pass: bool,
}

#[derive(Serialize)]
struct PrivacyReport {
    version: String,
    mode: &'static str,
    alpha: f64,
    seed: u64,
    paired_seed: u64,
    config_digest: String,
    paired_digest: String,
    targets: TheoremTargets,
    checks: Vec<CheckOutcome>,
    pass: bool,
}

fn read_transcript_file(path: &Path) -> Result<(TranscriptMeta, Vec<RunRecord>), CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    orchestrator::read_transcript(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn advantage_check(
    name: &'static str,
    a: &[RunRecord],
    b: &[RunRecord],
    party: Party,
    projection: &ViewProjection,
    alpha: f64,
    bound: f64,
) -> Result<CheckOutcome, CliError> {
    let project = |records: &[RunRecord]| -> Result<Vec<String>, CliError> {
        records
            .iter()
            .map(|rec| {
                project_view(rec, party, projection).map_err(|e| CliError::Data(e.to_string()))
            })
            .collect()
    };
    let adv = empirical_advantage(&project(a)?, &project(b)?, alpha)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(CheckOutcome {
        name,
        estimate: adv.estimate,
        margin: adv.margin,
        bound,
        n_train: adv.n_train,
        n_eval: adv.n_eval,
        pass: adv.estimate <= bound + adv.margin,
    })
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let (meta, records) = read_transcript_file(&args.transcript)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage("--alpha must be in (0,1)".into()));
    }
    let report = match args.mode {
        ModeArg::Correctness => {
            let mut aborted = 0usize;
            let mut pass_runs = 0usize;
            let mut decode_errors = 0usize;
            for rec in &records {
                match &rec.outcome {
                    Outcome::Aborted => aborted += 1,
                    Outcome::Decoded { value } => {
                        pass_runs += 1;
                        let idx = rec.user.target.flat(&rec.config.protocol);
                        if *value != rec.dc1.w.entry(idx) {
                            decode_errors += 1;
                        }
                    }
                }
            }
            let failure_rate = if pass_runs == 0 {
                0.0
            } else {
                decode_errors as f64 / pass_runs as f64
            };
            render_json(&CorrectnessReport {
                version: VERSION.into(),
                mode: "correctness",
                seed: meta.seed,
                config_digest: meta.config_digest.clone(),
                n_runs: records.len(),
                aborted,
                pass_runs,
                decode_errors,
                failure_rate,
                pass: decode_errors == 0,
            })
        }
        ModeArg::Bounds => {
            let report = check_theorem_bounds(&records, &meta.batch.config.links, args.alpha)
                .map_err(|e| CliError::Data(e.to_string()))?;
            render_json(&BoundsEnvelope {
                version: VERSION.into(),
                mode: "bounds",
                seed: meta.seed,
                config_digest: meta.config_digest.clone(),
                report,
            })
        }
        ModeArg::UserPrivacy | ModeArg::DbPrivacy | ModeArg::Secrecy => {
            let paired = args.paired.as_deref().ok_or_else(|| {
                CliError::Usage(
                    "this mode compares two batches: pass the alternative transcript with --paired"
                        .into(),
                )
            })?;
            let (meta_b, records_b) = read_transcript_file(paired)?;
            if meta.batch.config != meta_b.batch.config {
                return Err(CliError::Data(
                    "paired transcripts disagree on protocol/link configuration".into(),
                ));
            }
            let targets = theorem_targets(&meta.batch.config.links);
            let specs: Vec<(&'static str, Party, ViewProjection, f64)> = match args.mode {
                ModeArg::UserPrivacy => vec![
                    (
                        "dc1_eve_index_guess",
                        Party::Dc1Eve,
                        ViewProjection::IndexGuess { server: DcId::Dc1 },
                        targets.user_privacy,
                    ),
                    (
                        "dc2_eve_index_guess",
                        Party::Dc2Eve,
                        ViewProjection::IndexGuess { server: DcId::Dc2 },
                        targets.user_privacy,
                    ),
                ],
                ModeArg::DbPrivacy => vec![(
                    "user_eve_db_unmask",
                    Party::UserEve,
                    ViewProjection::DbUnmask,
                    targets.db_privacy,
                )],
                ModeArg::Secrecy => vec![
                    (
                        "eve_query_peek_u_d1",
                        Party::Eve,
                        ViewProjection::QueryPeek { server: DcId::Dc1 },
                        targets.secrecy,
                    ),
                    (
                        "eve_query_peek_u_d2",
                        Party::Eve,
                        ViewProjection::QueryPeek { server: DcId::Dc2 },
                        targets.secrecy,
                    ),
                ],
                _ => unreachable!(),
            };
            let mut checks = Vec::new();
            for (name, party, projection, bound) in &specs {
                checks.push(advantage_check(
                    name,
                    &records,
                    &records_b,
                    *party,
                    projection,
                    args.alpha,
                    *bound,
                )?);
            }
            let pass = checks.iter().all(|c| c.pass);
            render_json(&PrivacyReport {
                version: VERSION.into(),
                mode: match args.mode {
                    ModeArg::UserPrivacy => "user-privacy",
                    ModeArg::DbPrivacy => "db-privacy",
                    _ => "secrecy",
                },
                alpha: args.alpha,
                seed: meta.seed,
                paired_seed: meta_b.seed,
                config_digest: meta.config_digest.clone(),
                paired_digest: meta_b.config_digest.clone(),
                targets,
                checks,
                pass,
            })
        }
    };
    write_output(&args.out, &report)
}

// ---------------------------------------------------------------------------
// plan

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtoArg {
    B2,
    Xor,
}

impl ProtoArg {
    fn kind(self) -> ProtocolKind {
        match self {
            ProtoArg::B2 => ProtocolKind::B2,
            ProtoArg::Xor => ProtocolKind::Xor,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ProtoArg::B2 => "b2",
            ProtoArg::Xor => "xor",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Protocol whose cost model to evaluate
    #[arg(long, value_enum)]
    pub protocol: ProtoArg,
    /// Named workload preset (conflicts with --n/--entry-bits)
    #[arg(long)]
    pub scenario: Option<String>,
    /// Database entry count
    #[arg(long)]
    pub n: Option<u64>,
    /// Entry size in bits
    #[arg(long)]
    pub entry_bits: Option<u64>,
    /// Key budget per user↔server link, in bits
    #[arg(long)]
    pub per_link_budget: Option<u64>,
    /// Key budget for the server↔server link, in bits
    #[arg(long)]
    pub inter_dc_budget: Option<u64>,
    /// Sweep database sizes 10³..10¹² and emit a feasibility curve (CSV)
    #[arg(long)]
    pub curve: bool,
    /// TOML file with [block] and [epsilon] tables for the key-length bound
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// json (default for reports) or csv (default for --curve)
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Output path, or - for stdout
    #[arg(long, default_value = "-")]
    pub out: String,
    /// Recorded in the artifact for provenance
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// The resolved plan inputs, digested into the artifact.
#[derive(Serialize)]
struct PlanRequest<'a> {
    protocol: &'a str,
    scenario: Option<&'a str>,
    n: Option<u64>,
    entry_bits: Option<u64>,
    per_link_budget: Option<u64>,
    inter_dc_budget: Option<u64>,
    curve: bool,
    block: Option<BlockStats>,
    epsilon: Option<EpsilonBudget>,
}

#[derive(Serialize)]
struct PlanReport<'a> {
    version: String,
    seed: u64,
    config_digest: String,
    protocol: &'a str,
    scenario: Option<&'a str>,
    n: u64,
    entry_bits: u64,
    m: Option<u64>,
    per_link_bits: f64,
    inter_dc_bits: u64,
    per_link_budget: Option<u64>,
    inter_dc_budget: Option<u64>,
    l_max: Option<u64>,
    key_length: Option<u64>,
}

pub fn cmd_plan(args: &PlanArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => Some(config::load_file(path)?),
        None => None,
    };
    let (block, epsilon) = match file {
        Some(FileConfig { block, epsilon, .. }) => (block, epsilon),
        None => (None, None),
    };
    let scenario = match &args.scenario {
        Some(name) => {
            if args.n.is_some() || args.entry_bits.is_some() {
                return Err(CliError::Usage(
                    "--scenario conflicts with --n/--entry-bits; pick one way to size the workload"
                        .into(),
                ));
            }
            let preset = scenario_by_name(name).ok_or_else(|| {
                let known: Vec<&str> = scenario_presets().iter().map(|s| s.name).collect();
                CliError::Usage(format!(
                    "unknown scenario {name:?}; expected one of {known:?}"
                ))
            })?;
            Some(preset)
        }
        None => None,
    };
    let request = PlanRequest {
        protocol: args.protocol.name(),
        scenario: scenario.as_ref().map(|s| s.name),
        n: args.n,
        entry_bits: args.entry_bits,
        per_link_budget: args.per_link_budget,
        inter_dc_budget: args.inter_dc_budget,
        curve: args.curve,
        block,
        epsilon,
    };
    let digest = config::digest_of(&request);
    let kind = args.protocol.kind();

    if args.curve {
        if args.format == Some(FormatArg::Json) {
            return Err(CliError::Usage("--curve output is CSV".into()));
        }
        let per_link = args.per_link_budget.ok_or_else(|| {
            CliError::Usage("--curve needs --per-link-budget (and optionally --inter-dc-budget)".into())
        })?;
        let inter = args.inter_dc_budget.unwrap_or(u64::MAX);
        let sizes: Vec<u64> = (3..=12).map(|k| 10u64.pow(k)).collect();
        let points = feasibility_curve(kind, &sizes, per_link, inter)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let mut csv = format!(
            "# spir plan curve version={VERSION} seed={} config_digest={digest}\n",
            args.seed
        );
        csv.push_str("n,l_max,per_link_bits,inter_dc_bits\n");
        for p in &points {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                p.n,
                p.l_max.unwrap_or(0),
                p.per_link_cost,
                p.inter_dc_cost
            ));
        }
        return write_output(&args.out, &csv);
    }

    if args.format == Some(FormatArg::Csv) {
        return Err(CliError::Usage("csv output is for --curve; reports are JSON".into()));
    }
    let (n, l, scenario_name) = match (&scenario, args.n) {
        (Some(s), _) => (s.n, s.l, Some(s.name)),
        (None, Some(n)) => {
            let l = args.entry_bits.ok_or_else(|| {
                CliError::Usage("--entry-bits is required alongside --n".into())
            })?;
            (n, l, None)
        }
        (None, None) => {
            return Err(CliError::Usage(
                "size the workload with --scenario NAME or --n N --entry-bits L".into(),
            ))
        }
    };
    let cost = comm_cost(kind, n, l).map_err(|e| CliError::Usage(e.to_string()))?;
    let l_max = match (args.per_link_budget, args.inter_dc_budget) {
        (None, None) => None,
        (pl, idc) => max_entry_size(kind, n, pl.unwrap_or(u64::MAX), idc.unwrap_or(u64::MAX))
            .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let key_len = match (&block, &epsilon) {
        (None, None) => None,
        (Some(b), Some(e)) => {
            Some(key_length(b, e).map_err(|err| CliError::Usage(format!("key length: {err}")))?)
        }
        _ => {
            return Err(CliError::Usage(
                "key length needs both [block] and [epsilon] tables in --config".into(),
            ))
        }
    };
    render_and_write(
        &args.out,
        &PlanReport {
            version: VERSION.into(),
            seed: args.seed,
            config_digest: digest,
            protocol: args.protocol.name(),
            scenario: scenario_name,
            n,
            entry_bits: l,
            m: cost.m,
            per_link_bits: cost.per_link_bits,
            inter_dc_bits: cost.inter_dc_bits,
            per_link_budget: args.per_link_budget,
            inter_dc_budget: args.inter_dc_budget,
            l_max,
            key_length: key_len,
        },
    )
}

// ---------------------------------------------------------------------------
// output plumbing

fn render_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn render_and_write<T: Serialize>(out: &str, v: &T) -> Result<(), CliError> {
    write_output(out, &render_json(v))
}

fn write_output(out: &str, content: &str) -> Result<(), CliError> {
    if out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout
            .write_all(content.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout write failed: {e}")))
    } else {
        fs::write(out, content)
            .map_err(|e| CliError::Usage(format!("cannot write {out}: {e}")))
    }
}
