//! Trace documents and the seeded workload generator.
//!
//! A trace document starts with a header line and holds one transfer per
//! line:
//!
//! ```text
//! # trace mode=pair width=16
//! 0x0400 0x0520
//! 0x0524 0x0400
//! ```
//!
//! Dest-mode documents hold one destination per line and parse to
//! transfers with source 0.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cfg::{find_loops, BlockId, Cfg, EdgeKind};
use crate::model::{AddrWidth, Address, Mode, Transfer};
use crate::specfile::parse_hex;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDocument {
    pub mode: Mode,
    pub width: AddrWidth,
    pub transfers: Vec<Transfer>,
}

fn parse_header(line: &str) -> Option<(Mode, AddrWidth)> {
    let rest = line.trim().strip_prefix('#')?.trim().strip_prefix("trace")?;
    let (mut mode, mut width) = (None, None);
    for field in rest.split_whitespace() {
        match field.split_once('=')? {
            ("mode", m) => mode = m.parse().ok(),
            ("width", w) => width = AddrWidth::from_bits(w.parse().ok()?).ok(),
            _ => return None,
        }
    }
    Some((mode?, width?))
}

/// Line numbers in errors are 1-based and count the header.
pub fn parse_trace(text: &str) -> Result<TraceDocument, IngestError> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, msg: &str| IngestError::Parse { line, msg: msg.to_string() };
    let (mode, width) = lines
        .next()
        .and_then(|(_, l)| parse_header(l))
        .ok_or_else(|| err(1, "expected header `# trace mode=pair|dest width=16|32`"))?;
    let max = width.max_value();
    let addr = |s: &str, line: usize| -> Result<Address, IngestError> {
        let a = parse_hex(s).ok_or_else(|| err(line, &format!("bad hex {s:?}")))?;
        if a > max {
            return Err(err(line, &format!("address {a:#x} exceeds {}-bit width", width.bits())));
        }
        Ok(Address(a))
    };
    let mut transfers = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match (mode, fields.as_slice()) {
            (_, []) => continue,
            (Mode::Pair, [s, d]) => transfers.push(Transfer { src: addr(s, line_no)?, dest: addr(d, line_no)? }),
            (Mode::Dest, [d]) => transfers.push(Transfer { src: Address(0), dest: addr(d, line_no)? }),
            _ => return Err(err(line_no, "wrong number of fields for the declared mode")),
        }
    }
    Ok(TraceDocument { mode, width, transfers })
}

pub fn write_trace(trace: &[Transfer], mode: Mode, width: AddrWidth) -> String {
    let digits = if width == AddrWidth::W16 { 6 } else { 10 };
    let mut out = format!("# trace mode={} width={}\n", mode.as_str(), width.bits());
    for t in trace {
        match mode {
            Mode::Pair => out.push_str(&format!("{:#0w$x} {:#0w$x}\n", t.src.0, t.dest.0, w = digits)),
            Mode::Dest => out.push_str(&format!("{:#0w$x}\n", t.dest.0, w = digits)),
        }
    }
    out
}

/// Parameters of a weighted random walk over a CFG.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadProfile {
    pub seed: u64,
    /// Maximum number of transfers.
    pub steps: usize,
    /// Relative weight per edge kind; kinds not listed weigh 1.
    pub edge_weights: BTreeMap<EdgeKind, f64>,
    /// Multiplier for edges that stay inside every loop containing their
    /// source block.
    pub loop_bias: f64,
}

impl WorkloadProfile {
    pub fn uniform(seed: u64, steps: usize) -> Self {
        WorkloadProfile { seed, steps, edge_weights: BTreeMap::new(), loop_bias: 1.0 }
    }

    /// One dominant loop.
    pub fn sensor(seed: u64) -> Self {
        WorkloadProfile { loop_bias: 500.0, ..Self::uniform(seed, 100_000) }
    }

    /// Uniform choice among branches, long-running outer loop.
    pub fn branchy(seed: u64) -> Self {
        WorkloadProfile { loop_bias: 200.0, ..Self::uniform(seed, 100_000) }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let positive = |w: f64| w.is_finite() && w > 0.0;
        if !positive(self.loop_bias) || !self.edge_weights.values().all(|&w| positive(w)) {
            return Err(IngestError::InvalidProfile("weights must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Walks `cfg` from the entry block, emitting the transfer of every edge
/// taken, until `steps` transfers or a block without successors. Calls
/// push their continuation; a return edge back to the innermost pending
/// continuation is the only return choice when one exists.
pub fn generate_trace(cfg: &Cfg, profile: &WorkloadProfile) -> Vec<Transfer> {
    let loops = find_loops(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut stack: Vec<BlockId> = Vec::new();
    let mut at = cfg.entry_block();
    let mut trace = Vec::with_capacity(profile.steps.min(1 << 20));
    while trace.len() < profile.steps {
        let outs: Vec<_> = cfg.out_edges(at).collect();
        let top = stack.last().copied();
        let matching_return = outs.iter().any(|e| e.kind == EdgeKind::Return && Some(e.to) == top);
        let choices: Vec<_> =
            outs.into_iter().filter(|e| e.kind != EdgeKind::Return || !matching_return || Some(e.to) == top).collect();
        if choices.is_empty() {
            break;
        }
        let mine = loops.loops_of(at);
        let weights: Vec<f64> = choices
            .iter()
            .map(|e| {
                let w = profile.edge_weights.get(&e.kind).copied().unwrap_or(1.0);
                let stays = !mine.is_empty() && mine.iter().all(|&l| loops.loops[l].blocks.contains(&e.to));
                if stays {
                    w * profile.loop_bias
                } else {
                    w
                }
            })
            .collect();
        let pick = if choices.len() == 1 {
            0
        } else {
            WeightedIndex::new(&weights).expect("positive weights").sample(&mut rng)
        };
        let edge = choices[pick];
        match edge.kind {
            EdgeKind::Call => {
                if let Some(c) = cfg.call_continuation(at) {
                    stack.push(c);
                }
            }
            EdgeKind::Return if Some(edge.to) == top => {
                stack.pop();
            }
            _ => {}
        }
        trace.push(cfg.transfer(edge));
        at = edge.to;
    }
    trace
}

/// CFG documents shipped with the crate.
pub mod fixtures {
    use crate::cfg::Cfg;

    pub const SENSOR: &str = include_str!("../fixtures/sensor.toml");
    pub const BRANCHY: &str = include_str!("../fixtures/branchy.toml");
    pub const ANALYZER: &str = include_str!("../fixtures/analyzer.toml");

    pub fn sensor() -> Cfg {
        Cfg::from_toml(SENSOR).expect("fixture parses")
    }

    pub fn branchy() -> Cfg {
        Cfg::from_toml(BRANCHY).expect("fixture parses")
    }

    pub fn analyzer() -> Cfg {
        Cfg::from_toml(ANALYZER).expect("fixture parses")
    }
}
