//! Command implementations behind the `cflog` binary.
//!
//! Every command parses its inputs, calls the library once per step and
//! writes the result. Exit codes: 0 success, 1 error or authentication
//! failure, 2 invalid path or monitor reset.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cflog::cfg::Cfg;
use cflog::ingest::TraceDocument;
use cflog::monitor::{parse_events, Region};
use cflog::protocol::{Faults, CHAL_LEN};
use cflog::selection::{
    enumerate_candidates, estimate_savings, policy_minimize, policy_select, policy_top, select_static,
    static_candidates, PolicyConfig, DEFAULT_PATH_CAP,
};
use cflog::{
    compress_trace, deserialize_log, encode_raw, expand, generate_trace, image_digest, parse_spec_set, parse_trace,
    run_monitor, run_session, serialize_log, write_spec_set, write_trace, AddrWidth, EngineConfig, Key, LogFormat,
    Mode, MonitorVerdict, RegionMap, SubPathSpec, Transfer, Verdict, WorkloadProfile,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub mod metrics;

pub use metrics::{write_csv, MetricsReport, CSV_COLUMNS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_REJECTED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "cflog", version, about = "Speculative control-flow log compression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a trace document with a spec set.
    Compress(CompressArgs),
    /// Expand a compressed log back to a trace document.
    Expand(ExpandArgs),
    /// Choose sub-paths from training traces or a CFG.
    Select(SelectArgs),
    /// Generate a workload, run an attestation session and compare with no specs.
    Simulate(SimulateArgs),
    /// Check a memory access event file against the BlockMem rule.
    Monitor(MonitorArgs),
    /// Merge metrics reports into CSV on standard output.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Pair,
    Dest,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pair => Mode::Pair,
            ModeArg::Dest => Mode::Dest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Image,
    Tagged,
}

impl From<FormatArg> for LogFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Image => LogFormat::MemoryImage,
            FormatArg::Tagged => LogFormat::PortableTagged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Top,
    Minimize,
    Select,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Sensor,
    Branchy,
    Uniform,
}

/// Engine settings shared by several commands. Mode and width default to
/// the trace header where there is one.
#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_parser = ["16", "32"])]
    pub width: Option<String>,
    #[arg(long, default_value_t = 256)]
    pub slice_size: usize,
    /// Sub-path slots on the device.
    #[arg(long, default_value_t = cflog::model::MAX_SUB_PATHS)]
    pub max_paths: usize,
    #[arg(long, default_value_t = false)]
    pub retry: bool,
}

impl EngineArgs {
    /// Builds a config, rejecting flags that contradict `declared`.
    pub fn config(&self, declared: Option<(Mode, AddrWidth)>) -> Result<EngineConfig> {
        let flag_mode = self.mode.map(Mode::from);
        let flag_width =
            self.width.as_deref().map(|w| AddrWidth::from_bits(w.parse().expect("checked"))).transpose()?;
        let (mode, width) = match declared {
            Some((m, w)) => {
                if flag_mode.is_some_and(|f| f != m) || flag_width.is_some_and(|f| f != w) {
                    bail!("--mode/--width contradict the trace header (mode={} width={})", m.as_str(), w.bits());
                }
                (m, w)
            }
            None => (flag_mode.unwrap_or(Mode::Pair), flag_width.unwrap_or(AddrWidth::W16)),
        };
        let config = EngineConfig {
            slice_size_bytes: self.slice_size,
            max_sub_paths: self.max_paths,
            retry_on_mismatch: self.retry,
            ..EngineConfig::new(mode, width)
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub specs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Image)]
    pub format: FormatArg,
    /// Also write the metrics report as JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub specs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Image)]
    pub format: FormatArg,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[arg(long, value_enum)]
    pub policy: PolicyArg,
    /// Training trace documents for the mining policies.
    #[arg(long = "trace")]
    pub traces: Vec<PathBuf>,
    /// CFG document for the static policy.
    #[arg(long)]
    pub cfg: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Minimize replacement threshold in percent.
    #[arg(long, default_value_t = 100.0)]
    pub threshold: f64,
    /// BlockMem budget in bytes.
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
    #[arg(long, default_value_t = 16)]
    pub max_len: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub cfg: PathBuf,
    #[arg(long, value_enum, default_value_t = ProfileArg::Uniform)]
    pub profile: ProfileArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Overrides the profile's step count.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Spec set to install; otherwise `--policy` mines one.
    #[arg(long, conflicts_with = "policy")]
    pub specs: Option<PathBuf>,
    /// Mines specs from a training run generated with seed + 1.
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    #[arg(long, default_value_t = 100.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    /// Shared key file: 32 raw bytes or 64 hex digits.
    #[arg(long)]
    pub key: PathBuf,
    /// Drop slice SEQ in transit.
    #[arg(long = "drop", value_name = "SEQ")]
    pub drop: Vec<u32>,
    /// Flip one bit of slice SEQ in transit.
    #[arg(long = "flip", value_name = "SEQ")]
    pub flip: Vec<u32>,
    /// Deliver slice SEQ twice.
    #[arg(long = "replay", value_name = "SEQ")]
    pub replay: Vec<u32>,
    /// Deliver slice SEQ after the next one.
    #[arg(long = "reorder", value_name = "SEQ")]
    pub reorder: Vec<u32>,
    /// Replace transfer INDEX of the generated trace with one that has no CFG edge.
    #[arg(long, value_name = "INDEX")]
    pub inject_invalid: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MonitorArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Trusted code region `LO:HI`, inclusive.
    #[arg(long)]
    pub tcb: Region,
    /// BlockMem region `LO:HI`, inclusive.
    #[arg(long)]
    pub blockmem: Region,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    pub reports: Vec<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_trace(path: &Path) -> Result<TraceDocument> {
    parse_trace(&read_text(path)?).with_context(|| format!("parsing trace {}", path.display()))
}

fn read_specs(path: &Path) -> Result<Vec<SubPathSpec>> {
    parse_spec_set(&read_text(path)?).with_context(|| format!("parsing specs {}", path.display()))
}

fn read_cfg(path: &Path) -> Result<(Cfg, String)> {
    let text = read_text(path)?;
    let cfg = Cfg::from_toml(&text).with_context(|| format!("parsing cfg {}", path.display()))?;
    Ok((cfg, text))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Compress(a) => cmd_compress(&a, out),
        Command::Expand(a) => cmd_expand(&a),
        Command::Select(a) => cmd_select(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Monitor(a) => cmd_monitor(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
    }
}

pub fn cmd_compress(args: &CompressArgs, out: &mut dyn Write) -> Result<u8> {
    let doc = read_trace(&args.trace)?;
    let specs = read_specs(&args.specs)?;
    let config = args.engine.config(Some((doc.mode, doc.width)))?;
    let log = compress_trace(&doc.transfers, &specs, &config)?;
    let bytes = serialize_log(&log, &config, args.format.into())?;
    let report = MetricsReport::measure(&doc.transfers, &specs, &config)?;
    report.check()?;
    write_file(&args.out, bytes)?;
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(EXIT_OK)
}

pub fn cmd_expand(args: &ExpandArgs) -> Result<u8> {
    let specs = read_specs(&args.specs)?;
    let config = args.engine.config(None)?;
    let bytes = fs::read(&args.log).with_context(|| format!("reading {}", args.log.display()))?;
    let log = deserialize_log(&bytes, &config, args.format.into())?;
    let raw = expand(&log, &specs)?;
    write_file(&args.out, write_trace(&raw.raw_transfers()?, config.mode, config.width))?;
    Ok(EXIT_OK)
}

/// Mined or static selection as one library call chain.
pub fn choose_specs(
    policy: PolicyArg,
    logs: &[cflog::CfLog],
    cfg: Option<&Cfg>,
    policy_config: &PolicyConfig,
    config: &EngineConfig,
) -> Result<Vec<SubPathSpec>> {
    policy_config.validate()?;
    let n = policy_config.n_paths;
    let specs = match policy {
        PolicyArg::Static => {
            let cfg = cfg.context("the static policy needs --cfg")?;
            let ranked = static_candidates(cfg, config.mode, DEFAULT_PATH_CAP)?;
            select_static(&ranked, n, policy_config.budget_bytes, config)
        }
        mined => {
            if logs.is_empty() {
                bail!("mining policies need at least one training trace");
            }
            let candidates = enumerate_candidates(logs, policy_config.len_range);
            match mined {
                PolicyArg::Top => policy_top(&candidates, n),
                PolicyArg::Minimize => policy_minimize(&candidates, n, policy_config.threshold_t),
                _ => policy_select(&candidates, policy_config.budget_bytes, config),
            }
        }
    };
    Ok(specs)
}

pub fn cmd_select(args: &SelectArgs, out: &mut dyn Write) -> Result<u8> {
    let docs = args.traces.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>>>()?;
    let declared = docs.first().map(|d| (d.mode, d.width));
    if docs.iter().any(|d| Some((d.mode, d.width)) != declared) {
        bail!("training traces disagree on mode or width");
    }
    let config = args.engine.config(declared)?;
    let logs = docs.iter().map(|d| encode_raw(&d.transfers, &config)).collect::<Result<Vec<_>, _>>()?;
    let cfg = args.cfg.as_deref().map(read_cfg).transpose()?.map(|(c, _)| c);
    let policy_config = PolicyConfig {
        n_paths: config.max_sub_paths,
        len_range: (args.min_len, args.max_len),
        threshold_t: args.threshold,
        budget_bytes: args.budget,
    };
    let specs = choose_specs(args.policy, &logs, cfg.as_ref(), &policy_config, &config)?;
    write_file(&args.out, write_spec_set(&specs))?;
    for s in &specs {
        if logs.is_empty() {
            writeln!(out, "spec {} len {} est_savings n/a", s.id(), s.len())?;
        } else {
            writeln!(out, "spec {} len {} est_savings {}", s.id(), s.len(), estimate_savings(s, &logs, &config))?;
        }
    }
    Ok(EXIT_OK)
}

fn profile(arg: ProfileArg, seed: u64, steps: Option<usize>) -> WorkloadProfile {
    let p = match arg {
        ProfileArg::Sensor => WorkloadProfile::sensor(seed),
        ProfileArg::Branchy => WorkloadProfile::branchy(seed),
        ProfileArg::Uniform => WorkloadProfile::uniform(seed, 100_000),
    };
    WorkloadProfile { steps: steps.unwrap_or(p.steps), ..p }
}

/// Challenge derived from the seed so runs are reproducible.
pub fn seed_chal(seed: u64) -> [u8; CHAL_LEN] {
    let mut chal = [0u8; CHAL_LEN];
    chal[..8].copy_from_slice(&seed.to_le_bytes());
    chal[8..].copy_from_slice(&(!seed).to_le_bytes());
    chal
}

/// Replaces `trace[at]` with a transfer into an address past every block,
/// which no CFG edge reaches.
pub fn inject_invalid(trace: &mut [Transfer], at: usize, cfg: &Cfg, config: &EngineConfig) -> Result<()> {
    let Some(t) = trace.get_mut(at) else { bail!("--inject-invalid {at} is past the trace end") };
    let beyond = cfg.blocks().map(|b| b.end.0).max().unwrap_or(0) + 2;
    if beyond >= config.counter_tag_bit() {
        bail!("no free address above the CFG for an invalid edge");
    }
    t.dest = cflog::Address(beyond);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub verdict: String,
    pub rejects: Vec<String>,
    pub specs: usize,
    pub speculative: MetricsReport,
    pub baseline: MetricsReport,
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<u8> {
    let (cfg, cfg_text) = read_cfg(&args.cfg)?;
    let config = args.engine.config(None)?;
    let key = Key::parse(&fs::read(&args.key).with_context(|| format!("reading {}", args.key.display()))?)?;
    let prof = profile(args.profile, args.seed, args.steps);
    prof.validate()?;
    let specs = match (&args.specs, args.policy) {
        (Some(p), _) => read_specs(p)?,
        (None, Some(policy)) => {
            let training = generate_trace(&cfg, &profile(args.profile, args.seed.wrapping_add(1), args.steps));
            let log = encode_raw(&training, &config)?;
            let policy_config = PolicyConfig {
                n_paths: config.max_sub_paths,
                threshold_t: args.threshold,
                budget_bytes: args.budget,
                ..PolicyConfig::default()
            };
            choose_specs(policy, &[log], Some(&cfg), &policy_config, &config)?
        }
        (None, None) => Vec::new(),
    };
    let mut trace = generate_trace(&cfg, &prof);
    if let Some(at) = args.inject_invalid {
        inject_invalid(&mut trace, at, &cfg, &config)?;
    }
    let faults = Faults {
        drop: args.drop.iter().copied().collect(),
        flip: args.flip.iter().copied().collect(),
        replay: args.replay.iter().copied().collect(),
        reorder: args.reorder.iter().copied().collect(),
    };
    let chal = seed_chal(args.seed);
    let digest = image_digest(cfg_text.as_bytes());
    let session = run_session(&key, chal, &specs, &config, &trace, digest, faults, Some(&cfg))?;
    let baseline_session = run_session(&key, chal, &[], &config, &trace, digest, Faults::default(), Some(&cfg))?;

    let mut speculative = MetricsReport::measure(&trace, &specs, &config)?;
    speculative.slice_count = session.slice_count;
    let mut baseline = MetricsReport::measure(&trace, &[], &config)?;
    baseline.slice_count = baseline_session.slice_count;
    speculative.check()?;
    baseline.check()?;

    let verdict = session.assembly.verdict.clone();
    if verdict == Verdict::AuthenticAndValid {
        let got = session.assembly.raw.as_ref().context("assembly without log")?;
        if *got != encode_raw(&trace, &config)? {
            bail!("verifier log differs from the generated trace");
        }
    }
    let output = SimulateOutput {
        verdict: verdict.to_string(),
        rejects: session.rejects.iter().map(|r| r.as_str().to_string()).collect(),
        specs: specs.len(),
        speculative,
        baseline,
    };
    if let Some(p) = &args.report {
        write_json(p, &output.speculative)?;
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&output)?)?;
    Ok(match verdict {
        Verdict::AuthenticAndValid => EXIT_OK,
        Verdict::AuthenticButInvalidPath(_) => EXIT_REJECTED,
        Verdict::AuthFailure(_) | Verdict::Incomplete => EXIT_ERROR,
    })
}

pub fn cmd_monitor(args: &MonitorArgs, out: &mut dyn Write) -> Result<u8> {
    let events = parse_events(&read_text(&args.events)?)?;
    let regions = RegionMap { tcb: args.tcb, blockmem: args.blockmem };
    match run_monitor(&events, &regions) {
        MonitorVerdict::Ok => {
            writeln!(out, "ok {} events", events.len())?;
            Ok(EXIT_OK)
        }
        MonitorVerdict::ResetAt(i) => {
            writeln!(out, "reset at {i}: {}", events[i])?;
            Ok(EXIT_REJECTED)
        }
    }
}

pub fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> Result<u8> {
    let mut reports = Vec::new();
    for p in &args.reports {
        let r: MetricsReport =
            serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing report {}", p.display()))?;
        r.check().with_context(|| format!("report {}", p.display()))?;
        let run = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        reports.push((run, r));
    }
    write_csv(&reports, out)?;
    Ok(EXIT_OK)
}
