//! Domain types shared by the prover and verifier sides: addresses,
//! transfers, log elements, sub-path definitions and the engine
//! configuration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest repeat count a single `RepeatCount` element can carry.
pub const MAX_REPEAT: u16 = 0x7fff;

/// Hard ceiling on installed sub-paths.
pub const MAX_SUB_PATHS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("address {addr:#x} does not fit in {width} bits")]
    AddressOutOfRange { addr: u32, width: u32 },
    #[error("address {0:#x} collides with symbol or counter words in memory-image format")]
    EncodingOverlap(u32),
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error("block memory needs {needed} bytes, capacity is {capacity}")]
    CapacityExceeded { needed: usize, capacity: usize },
    #[error("duplicate sub-path id {0}")]
    DuplicateId(u8),
    #[error("sub-path length {0} exceeds 255")]
    LenOverflow(usize),
    #[error("malformed block memory: {0}")]
    MalformedBlockMem(String),
    #[error("invalid sub-path: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("spec file: {0}")]
    SpecFile(String),
}

/// Which part of a transfer the log records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `(src, dest)` pairs, as logged by hardware monitors.
    Pair,
    /// Destination only, as logged by instrumented secure-world calls.
    Dest,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pair => "pair",
            Mode::Dest => "dest",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pair" => Ok(Mode::Pair),
            "dest" => Ok(Mode::Dest),
            other => Err(ModelError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Machine word width. One log word is `bits / 8` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AddrWidth {
    W16,
    W32,
}

impl AddrWidth {
    pub fn from_bits(bits: u32) -> Result<Self, ModelError> {
        match bits {
            16 => Ok(AddrWidth::W16),
            32 => Ok(AddrWidth::W32),
            other => Err(ModelError::InvalidConfig(format!("unsupported width {other}"))),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            AddrWidth::W16 => 16,
            AddrWidth::W32 => 32,
        }
    }

    pub fn word_bytes(self) -> usize {
        self.bits() as usize / 8
    }

    /// Largest representable word value.
    pub fn max_value(self) -> u32 {
        match self {
            AddrWidth::W16 => 0xffff,
            AddrWidth::W32 => 0xffff_ffff,
        }
    }

    /// Highest word bit; flags a repeat counter in memory-image logs.
    pub fn counter_tag_bit(self) -> u32 {
        1 << (self.bits() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Address(pub u32);

impl Address {
    pub fn check(self, width: AddrWidth) -> Result<Self, ModelError> {
        if self.0 > width.max_value() {
            Err(ModelError::AddressOutOfRange { addr: self.0, width: width.bits() })
        } else {
            Ok(self)
        }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.0)
    }
}

impl From<u32> for Address {
    fn from(v: u32) -> Self {
        Address(v)
    }
}

/// One control-flow transfer. In destination-only mode `src` is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Transfer {
    pub src: Address,
    pub dest: Address,
}

impl Transfer {
    pub fn new(src: u32, dest: u32) -> Self {
        Transfer { src: Address(src), dest: Address(dest) }
    }

    /// Transfer that only carries a destination.
    pub fn to(dest: u32) -> Self {
        Transfer { src: Address(0), dest: Address(dest) }
    }

    /// The raw log element this transfer produces under `mode`.
    pub fn to_element(self, mode: Mode) -> LogElement {
        match mode {
            Mode::Pair => LogElement::RawPair(self),
            Mode::Dest => LogElement::RawDest(self.dest),
        }
    }

    pub(crate) fn check(self, mode: Mode, width: AddrWidth) -> Result<Self, ModelError> {
        if mode == Mode::Pair {
            self.src.check(width)?;
        }
        self.dest.check(width)?;
        Ok(self)
    }
}

/// One entry of a control-flow log, either a raw transfer or its
/// compressed stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogElement {
    RawPair(Transfer),
    RawDest(Address),
    Symbol(u8),
    RepeatCount(u16),
}

impl LogElement {
    /// Encoded size in words.
    pub fn words(&self) -> usize {
        match self {
            LogElement::RawPair(_) => 2,
            _ => 1,
        }
    }

    pub fn is_raw(&self) -> bool {
        matches!(self, LogElement::RawPair(_) | LogElement::RawDest(_))
    }

    pub fn raw_mode(&self) -> Option<Mode> {
        match self {
            LogElement::RawPair(_) => Some(Mode::Pair),
            LogElement::RawDest(_) => Some(Mode::Dest),
            _ => None,
        }
    }
}

/// An ordered control-flow log with its running encoded size.
///
/// The same type holds raw logs (only raw elements) and compressed logs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfLog {
    width: AddrWidth,
    elements: Vec<LogElement>,
    size_bytes: usize,
}

pub type RawLog = CfLog;
pub type CompressedLog = CfLog;

impl CfLog {
    pub fn new(width: AddrWidth) -> Self {
        CfLog { width, elements: Vec::new(), size_bytes: 0 }
    }

    pub fn from_elements(width: AddrWidth, elements: Vec<LogElement>) -> Self {
        let size_bytes = elements.iter().map(|e| e.words()).sum::<usize>() * width.word_bytes();
        CfLog { width, elements, size_bytes }
    }

    pub fn width(&self) -> AddrWidth {
        self.width
    }

    pub fn elements(&self) -> &[LogElement] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<LogElement> {
        self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn size_bytes(&self) -> usize {
        self.size_bytes
    }

    pub fn push(&mut self, element: LogElement) {
        self.size_bytes += element.words() * self.width.word_bytes();
        self.elements.push(element);
    }

    pub fn last(&self) -> Option<&LogElement> {
        self.elements.last()
    }

    pub(crate) fn last_mut(&mut self) -> Option<&mut LogElement> {
        self.elements.last_mut()
    }

    /// Drops the last `n` elements.
    pub fn truncate_tail(&mut self, n: usize) {
        let keep = self.elements.len().saturating_sub(n);
        for e in self.elements.drain(keep..) {
            self.size_bytes -= e.words() * self.width.word_bytes();
        }
    }

    /// Transfers of a raw log; dest-mode entries get source 0.
    pub fn raw_transfers(&self) -> Result<Vec<Transfer>, ModelError> {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| match *e {
                LogElement::RawPair(t) => Ok(t),
                LogElement::RawDest(d) => Ok(Transfer { src: Address(0), dest: d }),
                _ => Err(ModelError::MalformedLog(format!("element {i} is not raw"))),
            })
            .collect()
    }

    pub fn extend_from(&mut self, other: &CfLog) {
        for e in &other.elements {
            self.push(*e);
        }
    }

    /// Checks the placement rules: counts only after a symbol, a single
    /// raw kind throughout, counts within `2..=MAX_REPEAT`, symbol ids
    /// non-zero.
    pub fn check_well_formed(&self) -> Result<(), ModelError> {
        let mut raw_mode = None;
        let mut prev: Option<&LogElement> = None;
        for (i, e) in self.elements.iter().enumerate() {
            match e {
                LogElement::RepeatCount(k) => {
                    if !matches!(prev, Some(LogElement::Symbol(_))) {
                        return Err(ModelError::MalformedLog(format!(
                            "repeat count at element {i} does not follow a symbol"
                        )));
                    }
                    if *k < 2 || *k > MAX_REPEAT {
                        return Err(ModelError::MalformedLog(format!("repeat count {k} out of range")));
                    }
                }
                LogElement::Symbol(0) => {
                    return Err(ModelError::MalformedLog(format!("symbol id 0 at element {i}")));
                }
                LogElement::Symbol(_) => {}
                raw => {
                    let m = raw.raw_mode();
                    if raw_mode.is_some() && raw_mode != m {
                        return Err(ModelError::MalformedLog("mixed pair and dest elements".into()));
                    }
                    raw_mode = m;
                }
            }
            prev = Some(e);
        }
        Ok(())
    }
}

/// A verifier-defined sub-path speculation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubPathSpec {
    id: u8,
    entries: Vec<LogElement>,
}

impl SubPathSpec {
    /// `entries` must be non-empty raw elements of a single kind.
    pub fn new(id: u8, entries: Vec<LogElement>) -> Result<Self, ModelError> {
        if id == 0 {
            return Err(ModelError::InvalidSpec("id must be in 1..=255".into()));
        }
        if entries.is_empty() {
            return Err(ModelError::InvalidSpec(format!("sub-path {id} has no entries")));
        }
        if entries.len() > 255 {
            return Err(ModelError::LenOverflow(entries.len()));
        }
        let mode = entries[0].raw_mode();
        if mode.is_none() || entries.iter().any(|e| e.raw_mode() != mode) {
            return Err(ModelError::InvalidSpec(format!(
                "sub-path {id} entries must all be raw transfers of one mode"
            )));
        }
        Ok(SubPathSpec { id, entries })
    }

    pub fn pair(id: u8, transfers: &[Transfer]) -> Result<Self, ModelError> {
        Self::new(id, transfers.iter().map(|t| LogElement::RawPair(*t)).collect())
    }

    pub fn dest(id: u8, dests: &[u32]) -> Result<Self, ModelError> {
        Self::new(id, dests.iter().map(|d| LogElement::RawDest(Address(*d))).collect())
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn entries(&self) -> &[LogElement] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mode(&self) -> Mode {
        self.entries[0].raw_mode().expect("validated at construction")
    }

    pub fn with_id(&self, id: u8) -> Result<Self, ModelError> {
        Self::new(id, self.entries.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub mode: Mode,
    pub width: AddrWidth,
    /// Lowest code address. Must exceed 255 so symbol words stay distinct.
    pub min_code_addr: Address,
    pub max_sub_paths: usize,
    pub slice_size_bytes: usize,
    /// Re-test a mismatching transfer against the first entry of a
    /// detector that was mid-match.
    pub retry_on_mismatch: bool,
    pub blockmem_capacity_bytes: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: Mode::Pair,
            width: AddrWidth::W16,
            min_code_addr: Address(0x0400),
            max_sub_paths: MAX_SUB_PATHS,
            slice_size_bytes: 256,
            retry_on_mismatch: false,
            blockmem_capacity_bytes: 2048,
        }
    }
}

impl EngineConfig {
    pub fn new(mode: Mode, width: AddrWidth) -> Self {
        EngineConfig { mode, width, ..Default::default() }
    }

    pub fn word_bytes(&self) -> usize {
        self.width.word_bytes()
    }

    /// Bytes taken by one raw transfer in this mode.
    pub fn raw_element_bytes(&self) -> usize {
        match self.mode {
            Mode::Pair => 2 * self.word_bytes(),
            Mode::Dest => self.word_bytes(),
        }
    }

    pub fn counter_tag_bit(&self) -> u32 {
        self.width.counter_tag_bit()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.min_code_addr.0 <= 255 {
            return Err(ModelError::InvalidConfig("min_code_addr must exceed 255".into()));
        }
        if self.min_code_addr.0 >= self.counter_tag_bit() {
            return Err(ModelError::InvalidConfig("min_code_addr overlaps the counter tag range".into()));
        }
        if !(1..=MAX_SUB_PATHS).contains(&self.max_sub_paths) {
            return Err(ModelError::InvalidConfig(format!("max_sub_paths must be in 1..={MAX_SUB_PATHS}")));
        }
        if self.slice_size_bytes == 0 {
            return Err(ModelError::InvalidConfig("slice size must be positive".into()));
        }
        Ok(())
    }
}

/// Canonical raw form of a trace: one raw element per transfer.
pub fn encode_raw(trace: &[Transfer], config: &EngineConfig) -> Result<RawLog, ModelError> {
    let mut log = CfLog::new(config.width);
    for t in trace {
        log.push(t.check(config.mode, config.width)?.to_element(config.mode));
    }
    Ok(log)
}
