//! Access-control check guarding the block memory region.
//!
//! A write into block memory resets the device unless the CPU performs it
//! while executing inside the trusted code region. DMA writes into block
//! memory always reset.

use std::fmt;

use thiserror::Error;

use crate::model::Address;
use crate::specfile::parse_hex;

/// Closed address interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub lo: Address,
    pub hi: Address,
}

impl Region {
    pub fn new(lo: u32, hi: u32) -> Result<Self, MonitorError> {
        if lo > hi {
            return Err(MonitorError::BadRegion(format!("{lo:#x} > {hi:#x}")));
        }
        Ok(Region { lo: Address(lo), hi: Address(hi) })
    }

    pub fn contains(&self, a: Address) -> bool {
        self.lo <= a && a <= self.hi
    }
}

impl std::str::FromStr for Region {
    type Err = MonitorError;

    /// `LO:HI` in hex.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s.split_once(':').ok_or_else(|| MonitorError::BadRegion(s.to_string()))?;
        match (parse_hex(lo), parse_hex(hi)) {
            (Some(lo), Some(hi)) => Region::new(lo, hi),
            _ => Err(MonitorError::BadRegion(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionMap {
    pub tcb: Region,
    pub blockmem: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessEvent {
    pub pc: Address,
    /// Target of a CPU write, present iff the CPU writes this cycle.
    pub write: Option<Address>,
    /// Target of a DMA write, present iff DMA is active this cycle.
    pub dma: Option<Address>,
}

impl AccessEvent {
    pub fn w_en(&self) -> bool {
        self.write.is_some()
    }

    pub fn dma_en(&self) -> bool {
        self.dma.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Allow,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorVerdict {
    Ok,
    ResetAt(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("bad region {0}")]
    BadRegion(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn check_access(event: &AccessEvent, regions: &RegionMap) -> Access {
    let cpu = !regions.tcb.contains(event.pc) && event.write.is_some_and(|d| regions.blockmem.contains(d));
    let dma = event.dma.is_some_and(|d| regions.blockmem.contains(d));
    if cpu || dma {
        Access::Reset
    } else {
        Access::Allow
    }
}

pub fn run_monitor(events: &[AccessEvent], regions: &RegionMap) -> MonitorVerdict {
    events
        .iter()
        .position(|e| check_access(e, regions) == Access::Reset)
        .map_or(MonitorVerdict::Ok, MonitorVerdict::ResetAt)
}

impl fmt::Display for AccessEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flags = match (self.write.is_some(), self.dma.is_some()) {
            (false, false) => "--",
            (true, false) => "W-",
            (false, true) => "-D",
            (true, true) => "WD",
        };
        let opt = |a: Option<Address>| a.map_or("-".to_string(), |a| format!("{:#06x}", a.0));
        write!(f, "{:#06x} {flags} {} {}", self.pc.0, opt(self.write), opt(self.dma))
    }
}

/// Parses an event file: one `PC FLAGS D_ADDR DMA_ADDR` record per line,
/// flags from `--`, `W-`, `-D`, `WD`, absent addresses written `-`.
/// Blank lines and `#` comments are skipped.
pub fn parse_events(text: &str) -> Result<Vec<AccessEvent>, MonitorError> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: &str| MonitorError::Parse { line: line_no, msg: msg.to_string() };
        let fields: Vec<&str> = body.split_whitespace().collect();
        let [pc, flags, d, dma] = fields[..] else {
            return Err(err("expected 4 fields"));
        };
        let pc = parse_hex(pc).ok_or_else(|| err("bad pc"))?;
        let (w_en, dma_en) = match flags {
            "--" => (false, false),
            "W-" => (true, false),
            "-D" => (false, true),
            "WD" => (true, true),
            _ => return Err(err("bad flags")),
        };
        let addr = |s: &str, on: bool, what: &str| -> Result<Option<Address>, MonitorError> {
            match (on, s) {
                (false, "-") => Ok(None),
                (true, s) if s != "-" => parse_hex(s).map(|a| Some(Address(a))).ok_or_else(|| err(what)),
                _ => Err(err(what)),
            }
        };
        events.push(AccessEvent {
            pc: Address(pc),
            write: addr(d, w_en, "write address must be present iff W is set")?,
            dma: addr(dma, dma_en, "dma address must be present iff D is set")?,
        });
    }
    Ok(events)
}

pub fn write_events(events: &[AccessEvent]) -> String {
    events.iter().map(|e| format!("{e}\n")).collect()
}
