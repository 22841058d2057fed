//! Streaming sub-path compressor.
//!
//! One detector per installed sub-path tracks a partial match against the
//! incoming transfers. Each transfer is appended raw; when a detector
//! completes, the lowest-indexed completing sub-path wins, its raw tail is
//! replaced by the sub-path's symbol and every detector drops back to
//! `Idle`. Consecutive symbols of the same sub-path coalesce into
//! `[Symbol(id), RepeatCount(k)]`.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::model::{
    encode_raw, CfLog, CompressedLog, EngineConfig, LogElement, ModelError, RawLog, SubPathSpec, Transfer, MAX_REPEAT,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{got} sub-paths installed, at most {max} supported")]
    TooManySpecs { got: usize, max: usize },
    #[error("sub-path {id} does not match the configured log mode")]
    ModeMismatch { id: u8 },
    #[error("unknown symbol id {0}")]
    UnknownSymbol(u8),
    #[error("slice size {slice} cannot hold one raw element ({needed} bytes)")]
    SliceTooSmall { slice: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Monitor,
    /// Completed on the current transfer. Only observable inside a step;
    /// the multiplexer resets every detector once a replacement happens.
    Detect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorState {
    pub phase: Phase,
    /// Index of the next entry to compare.
    pub block_ptr: usize,
}

impl DetectorState {
    const IDLE: DetectorState = DetectorState { phase: Phase::Idle, block_ptr: 0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RepeatState {
    pub last_id: Option<u8>,
    /// Occurrences represented by the current tail run (1 = lone symbol).
    pub repeat_ctr: u16,
    pub tail_is_countable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub transfers: u64,
    /// Detections per sub-path id.
    pub hits: BTreeMap<u8, u64>,
    /// Steps on which more than one detector completed.
    pub simultaneous_completions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Appended,
    Replaced { spec_index: usize, id: u8, coalesced: bool },
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    specs: Vec<SubPathSpec>,
    detectors: Vec<DetectorState>,
    repeat: RepeatState,
    log: CompressedLog,
    raw_since_symbol: usize,
    stats: EngineStats,
}

fn check_specs(specs: &[SubPathSpec], config: &EngineConfig) -> Result<(), EngineError> {
    config.validate()?;
    if specs.len() > config.max_sub_paths {
        return Err(EngineError::TooManySpecs { got: specs.len(), max: config.max_sub_paths });
    }
    let mut ids = HashSet::new();
    for s in specs {
        if s.mode() != config.mode {
            return Err(EngineError::ModeMismatch { id: s.id() });
        }
        if !ids.insert(s.id()) {
            return Err(ModelError::DuplicateId(s.id()).into());
        }
        for e in s.entries() {
            if let LogElement::RawPair(t) = e {
                t.src.check(config.width)?;
                t.dest.check(config.width)?;
            } else if let LogElement::RawDest(d) = e {
                d.check(config.width)?;
            }
        }
    }
    Ok(())
}

impl Engine {
    pub fn new(specs: Vec<SubPathSpec>, config: EngineConfig) -> Result<Self, EngineError> {
        check_specs(&specs, &config)?;
        Ok(Engine {
            detectors: vec![DetectorState::IDLE; specs.len()],
            log: CfLog::new(config.width),
            config,
            specs,
            repeat: RepeatState::default(),
            raw_since_symbol: 0,
            stats: EngineStats::default(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn specs(&self) -> &[SubPathSpec] {
        &self.specs
    }

    pub fn detectors(&self) -> &[DetectorState] {
        &self.detectors
    }

    pub fn repeat_state(&self) -> RepeatState {
        self.repeat
    }

    pub fn log(&self) -> &CompressedLog {
        &self.log
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    /// Feeds one transfer.
    pub fn step(&mut self, transfer: Transfer) -> Result<StepOutcome, EngineError> {
        let element = transfer.check(self.config.mode, self.config.width)?.to_element(self.config.mode);
        self.stats.transfers += 1;
        self.log.push(element);
        self.raw_since_symbol += 1;
        self.repeat.tail_is_countable = false;

        let retry = self.config.retry_on_mismatch;
        let mut winner = None;
        let mut completions = 0;
        for (i, det) in self.detectors.iter_mut().enumerate() {
            let pattern = self.specs[i].entries();
            let test_at = |ptr: usize| {
                if pattern[ptr] != element {
                    DetectorState::IDLE
                } else if ptr + 1 == pattern.len() {
                    DetectorState { phase: Phase::Detect, block_ptr: 0 }
                } else {
                    DetectorState { phase: Phase::Monitor, block_ptr: ptr + 1 }
                }
            };
            *det = match det.phase {
                Phase::Idle | Phase::Detect => test_at(0),
                Phase::Monitor => {
                    let next = test_at(det.block_ptr);
                    if next.phase == Phase::Idle && retry {
                        test_at(0)
                    } else {
                        next
                    }
                }
            };
            if det.phase == Phase::Detect {
                completions += 1;
                winner.get_or_insert(i);
            }
        }

        let Some(index) = winner else {
            return Ok(StepOutcome::Appended);
        };
        if completions > 1 {
            self.stats.simultaneous_completions += 1;
        }
        self.detectors.fill(DetectorState::IDLE);
        let (id, len) = (self.specs[index].id(), self.specs[index].len());
        debug_assert!(self.raw_since_symbol >= len);
        self.log.truncate_tail(len);
        self.raw_since_symbol -= len;
        *self.stats.hits.entry(id).or_insert(0) += 1;
        let coalesced = self.append_symbol(id);
        Ok(StepOutcome::Replaced { spec_index: index, id, coalesced })
    }

    fn append_symbol(&mut self, id: u8) -> bool {
        let countable = self.raw_since_symbol == 0 && self.repeat.last_id == Some(id);
        let mut coalesced = false;
        if countable {
            match self.log.last_mut() {
                Some(LogElement::Symbol(s)) if *s == id => {
                    self.log.push(LogElement::RepeatCount(2));
                    coalesced = true;
                }
                Some(LogElement::RepeatCount(k)) if *k < MAX_REPEAT => {
                    *k += 1;
                    coalesced = true;
                }
                _ => {}
            }
        }
        if coalesced {
            self.repeat.repeat_ctr += 1;
        } else {
            self.log.push(LogElement::Symbol(id));
            self.repeat.last_id = Some(id);
            self.repeat.repeat_ctr = 1;
        }
        self.repeat.tail_is_countable = true;
        self.raw_since_symbol = 0;
        coalesced
    }

    /// Abandons any partial matches and returns the log.
    pub fn finalize(self) -> CompressedLog {
        self.log
    }

    /// Hands out the current log and restarts with an empty one, forgetting
    /// all detector and repeat progress.
    pub fn take_slice(&mut self) -> CompressedLog {
        self.detectors.fill(DetectorState::IDLE);
        self.repeat = RepeatState::default();
        self.raw_since_symbol = 0;
        std::mem::replace(&mut self.log, CfLog::new(self.config.width))
    }

    /// Checks the internal invariants. Meant for tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        let tail = self.log.elements();
        for (i, d) in self.detectors.iter().enumerate() {
            let pattern = self.specs[i].entries();
            match d.phase {
                Phase::Detect => return Err(format!("detector {i} left in Detect")),
                Phase::Idle if d.block_ptr != 0 => return Err(format!("idle detector {i} has ptr")),
                Phase::Monitor => {
                    let p = d.block_ptr;
                    if p == 0 || p >= pattern.len() {
                        return Err(format!("detector {i} ptr {p} out of range"));
                    }
                    if p > self.raw_since_symbol || tail[tail.len() - p..] != pattern[..p] {
                        return Err(format!("detector {i} partial match is not the raw log tail"));
                    }
                }
                Phase::Idle => {}
            }
        }
        if self.repeat.tail_is_countable != (self.raw_since_symbol == 0 && self.repeat.last_id.is_some()) {
            return Err("repeat countable flag out of sync".into());
        }
        Ok(())
    }
}

/// Feeds a trace through a fresh engine and returns the compressed log.
pub fn compress_trace(
    trace: &[Transfer],
    specs: &[SubPathSpec],
    config: &EngineConfig,
) -> Result<CompressedLog, EngineError> {
    let mut engine = Engine::new(specs.to_vec(), config.clone())?;
    for t in trace {
        engine.step(*t)?;
    }
    Ok(engine.finalize())
}

/// Compressor that cuts the log into slices of at most
/// `config.slice_size_bytes`. Matches never span a slice boundary.
#[derive(Debug, Clone)]
pub struct SliceCompressor {
    engine: Engine,
    emitted: usize,
}

impl SliceCompressor {
    pub fn new(specs: Vec<SubPathSpec>, config: EngineConfig) -> Result<Self, EngineError> {
        let needed = config.raw_element_bytes();
        if config.slice_size_bytes < needed {
            return Err(EngineError::SliceTooSmall { slice: config.slice_size_bytes, needed });
        }
        Ok(SliceCompressor { engine: Engine::new(specs, config)?, emitted: 0 })
    }

    /// Feeds one transfer; returns a completed slice when the transfer
    /// would not fit in the current one.
    pub fn push(&mut self, transfer: Transfer) -> Result<Option<CompressedLog>, EngineError> {
        let cfg = self.engine.config();
        transfer.check(cfg.mode, cfg.width)?;
        let full = self.engine.log().size_bytes() + cfg.raw_element_bytes() > cfg.slice_size_bytes;
        let out = if full {
            self.emitted += 1;
            Some(self.engine.take_slice())
        } else {
            None
        };
        self.engine.step(transfer)?;
        Ok(out)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Emits the last slice. A run that produced nothing still yields one
    /// empty slice.
    pub fn finish(mut self) -> (Option<CompressedLog>, EngineStats) {
        let last =
            if self.emitted == 0 || !self.engine.log().is_empty() { Some(self.engine.take_slice()) } else { None };
        (last, self.engine.stats.clone())
    }
}

pub fn slice_compress(
    trace: &[Transfer],
    specs: &[SubPathSpec],
    config: &EngineConfig,
) -> Result<Vec<CompressedLog>, EngineError> {
    let mut sc = SliceCompressor::new(specs.to_vec(), config.clone())?;
    let mut slices = Vec::new();
    for t in trace {
        slices.extend(sc.push(*t)?);
    }
    slices.extend(sc.finish().0);
    Ok(slices)
}

/// Replaces every symbol (and its repeat count) with the sub-path entries.
pub fn expand(log: &CompressedLog, specs: &[SubPathSpec]) -> Result<RawLog, EngineError> {
    log.check_well_formed()?;
    let by_id: HashMap<u8, &SubPathSpec> = specs.iter().map(|s| (s.id(), s)).collect();
    let mut out = CfLog::new(log.width());
    let mut last: Option<&SubPathSpec> = None;
    for e in log.elements() {
        match *e {
            LogElement::Symbol(id) => {
                let spec = by_id.get(&id).ok_or(EngineError::UnknownSymbol(id))?;
                for x in spec.entries() {
                    out.push(*x);
                }
                last = Some(spec);
            }
            LogElement::RepeatCount(k) => {
                let spec = last.ok_or_else(|| ModelError::MalformedLog("count without symbol".into()))?;
                for _ in 1..k {
                    for x in spec.entries() {
                        out.push(*x);
                    }
                }
                last = None;
            }
            raw => {
                out.push(raw);
                last = None;
            }
        }
    }
    Ok(out)
}

/// Slices of the plain raw encoding, the baseline without speculation.
pub fn raw_slices(trace: &[Transfer], config: &EngineConfig) -> Result<Vec<RawLog>, EngineError> {
    let log = encode_raw(trace, config)?;
    let per = config.slice_size_bytes / config.raw_element_bytes();
    if per == 0 {
        return Err(EngineError::SliceTooSmall { slice: config.slice_size_bytes, needed: config.raw_element_bytes() });
    }
    if log.is_empty() {
        return Ok(vec![CfLog::new(config.width)]);
    }
    Ok(log.elements().chunks(per).map(|c| CfLog::from_elements(config.width, c.to_vec())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AddrWidth, Mode};

    const A: u32 = 0x0400;
    const B: u32 = 0x0410;
    const C: u32 = 0x0420;
    const D: u32 = 0x0430;
    const G: u32 = 0x0460;

    fn abdg() -> Vec<Transfer> {
        vec![Transfer::new(A, B), Transfer::new(B, D), Transfer::new(D, G)]
    }

    fn raw(t: Transfer) -> LogElement {
        LogElement::RawPair(t)
    }

    #[test]
    fn single_match_becomes_symbol() {
        let spec = SubPathSpec::pair(1, &abdg()).unwrap();
        let log = compress_trace(&abdg(), &[spec], &EngineConfig::default()).unwrap();
        assert_eq!(log.elements(), &[LogElement::Symbol(1)]);
        assert_eq!(log.size_bytes(), 2);
    }

    #[test]
    fn consecutive_matches_coalesce() {
        let spec = SubPathSpec::pair(1, &abdg()).unwrap();
        let trace: Vec<_> = abdg().into_iter().cycle().take(6).collect();
        let log = compress_trace(&trace, std::slice::from_ref(&spec), &EngineConfig::default()).unwrap();
        assert_eq!(log.elements(), &[LogElement::Symbol(1), LogElement::RepeatCount(2)]);
        let trace: Vec<_> = abdg().into_iter().cycle().take(15).collect();
        let log = compress_trace(&trace, &[spec], &EngineConfig::default()).unwrap();
        assert_eq!(log.elements(), &[LogElement::Symbol(1), LogElement::RepeatCount(5)]);
    }

    #[test]
    fn lower_index_wins_and_resets_others() {
        let x = Transfer::new(A, B);
        let y = Transfer::new(B, C);
        let z = Transfer::new(C, D);
        let s1 = SubPathSpec::pair(1, &[x, y]).unwrap();
        let s2 = SubPathSpec::pair(2, &[x, y, z]).unwrap();
        let mut engine = Engine::new(vec![s1, s2], EngineConfig::default()).unwrap();
        engine.step(x).unwrap();
        assert_eq!(engine.detectors()[1], DetectorState { phase: Phase::Monitor, block_ptr: 1 });
        let out = engine.step(y).unwrap();
        assert_eq!(out, StepOutcome::Replaced { spec_index: 0, id: 1, coalesced: false });
        assert!(engine.detectors().iter().all(|d| *d == DetectorState::IDLE));
        engine.step(z).unwrap();
        assert_eq!(engine.finalize().elements(), &[LogElement::Symbol(1), raw(z)]);
    }

    #[test]
    fn simultaneous_completion_prefers_lower_index() {
        let x = Transfer::new(A, B);
        let y = Transfer::new(B, C);
        let s_long = SubPathSpec::pair(5, &[x, y]).unwrap();
        let s_short = SubPathSpec::pair(9, &[y]).unwrap();
        let mut engine = Engine::new(vec![s_long.clone(), s_short.clone()], EngineConfig::default()).unwrap();
        engine.step(x).unwrap();
        engine.step(y).unwrap();
        assert_eq!(engine.stats().simultaneous_completions, 1);
        assert_eq!(engine.log().elements(), &[LogElement::Symbol(5)]);
        let log = compress_trace(&[x, y], &[s_short, s_long], &EngineConfig::default()).unwrap();
        assert_eq!(log.elements(), &[raw(x), LogElement::Symbol(9)]);
    }

    #[test]
    fn mismatch_is_not_retested_by_default() {
        // spec: X X Y ; trace: X X X Y
        let x = Transfer::new(A, B);
        let y = Transfer::new(B, C);
        let spec = SubPathSpec::pair(1, &[x, x, y]).unwrap();
        let trace = [x, x, x, y];
        let log = compress_trace(&trace, std::slice::from_ref(&spec), &EngineConfig::default()).unwrap();
        assert_eq!(log.elements(), &trace.map(raw));
        let retry = EngineConfig { retry_on_mismatch: true, ..EngineConfig::default() };
        let log = compress_trace(&trace, &[spec], &retry).unwrap();
        // with retry the third X restarts at position 0, then Y mismatches
        // position 1
        assert_eq!(log.elements(), &trace.map(raw));
        let trace = [x, y, x, x, y];
        let spec = SubPathSpec::pair(1, &[x, x, y]).unwrap();
        let log = compress_trace(&trace, std::slice::from_ref(&spec), &retry).unwrap();
        assert_eq!(log.elements(), &[raw(x), raw(y), LogElement::Symbol(1)]);
        let trace = [x, y, y, x, x, y];
        let log = compress_trace(&trace, &[spec], &EngineConfig::default()).unwrap();
        assert_eq!(log.elements(), &[raw(x), raw(y), raw(y), LogElement::Symbol(1)]);
    }

    #[test]
    fn retry_restarts_mid_match() {
        // spec X Y ; trace X X Y: second X mismatches ptr 1 (expects Y)
        let x = Transfer::new(A, B);
        let y = Transfer::new(B, C);
        let spec = SubPathSpec::pair(1, &[x, y]).unwrap();
        let trace = [x, x, y];
        let plain = compress_trace(&trace, std::slice::from_ref(&spec), &EngineConfig::default()).unwrap();
        assert_eq!(plain.elements(), &trace.map(raw));
        let retry = EngineConfig { retry_on_mismatch: true, ..EngineConfig::default() };
        let log = compress_trace(&trace, &[spec], &retry).unwrap();
        assert_eq!(log.elements(), &[raw(x), LogElement::Symbol(1)]);
    }

    #[test]
    fn no_specs_is_raw_encoding() {
        let trace = abdg();
        let config = EngineConfig::default();
        assert_eq!(compress_trace(&trace, &[], &config).unwrap(), encode_raw(&trace, &config).unwrap());
    }

    #[test]
    fn engine_new_limits() {
        let config = EngineConfig::default();
        let specs: Vec<_> = (1..=9).map(|i| SubPathSpec::pair(i, &[Transfer::new(A, B)]).unwrap()).collect();
        assert!(Engine::new(specs[..8].to_vec(), config.clone()).is_ok());
        assert_eq!(
            Engine::new(specs.clone(), config.clone()).unwrap_err(),
            EngineError::TooManySpecs { got: 9, max: 8 }
        );
        let dest = SubPathSpec::dest(1, &[A]).unwrap();
        assert_eq!(Engine::new(vec![dest], config).unwrap_err(), EngineError::ModeMismatch { id: 1 });
    }

    #[test]
    fn finalize_keeps_partial_raw() {
        let spec = SubPathSpec::pair(1, &abdg()).unwrap();
        let prefix = &abdg()[..2];
        let config = EngineConfig::default();
        assert_eq!(
            compress_trace(prefix, std::slice::from_ref(&spec), &config).unwrap(),
            encode_raw(prefix, &config).unwrap()
        );
        let mut trace = abdg();
        trace.extend_from_slice(prefix);
        let log = compress_trace(&trace, &[spec], &config).unwrap();
        assert_eq!(log.elements(), &[LogElement::Symbol(1), raw(abdg()[0]), raw(abdg()[1])]);
        assert!(compress_trace(&[], &[], &config).unwrap().is_empty());
    }

    #[test]
    fn repeat_counter_saturates() {
        let x = Transfer::new(A, B);
        let spec = SubPathSpec::pair(1, &[x]).unwrap();
        let n = MAX_REPEAT as usize + 3;
        let log = compress_trace(&vec![x; n], std::slice::from_ref(&spec), &EngineConfig::default()).unwrap();
        assert_eq!(
            log.elements(),
            &[
                LogElement::Symbol(1),
                LogElement::RepeatCount(MAX_REPEAT),
                LogElement::Symbol(1),
                LogElement::RepeatCount(3)
            ]
        );
        assert_eq!(expand(&log, &[spec]).unwrap().len(), n);
    }

    #[test]
    fn coalescing_is_per_id() {
        let x = Transfer::new(A, B);
        let y = Transfer::new(B, C);
        let s1 = SubPathSpec::pair(1, &[x]).unwrap();
        let s2 = SubPathSpec::pair(2, &[y]).unwrap();
        let log = compress_trace(&[x, x, y, x], &[s1, s2], &EngineConfig::default()).unwrap();
        assert_eq!(
            log.elements(),
            &[LogElement::Symbol(1), LogElement::RepeatCount(2), LogElement::Symbol(2), LogElement::Symbol(1)]
        );
    }

    #[test]
    fn raw_between_symbols_blocks_coalescing() {
        let spec = SubPathSpec::pair(1, &abdg()).unwrap();
        let other = Transfer::new(G, C);
        let mut trace = abdg();
        trace.push(other);
        trace.extend(abdg());
        let log = compress_trace(&trace, &[spec], &EngineConfig::default()).unwrap();
        assert_eq!(log.elements(), &[LogElement::Symbol(1), raw(other), LogElement::Symbol(1)]);
    }

    #[test]
    fn raw_before_symbol_does_not_block_later_coalescing() {
        let spec = SubPathSpec::pair(1, &abdg()).unwrap();
        let other = Transfer::new(G, C);
        let mut trace = abdg();
        trace.extend([other, other]);
        trace.extend(abdg());
        trace.extend(abdg());
        let log = compress_trace(&trace, &[spec], &EngineConfig::default()).unwrap();
        assert_eq!(
            log.elements(),
            &[LogElement::Symbol(1), raw(other), raw(other), LogElement::Symbol(1), LogElement::RepeatCount(2)]
        );
    }

    #[test]
    fn expand_examples() {
        let spec = SubPathSpec::pair(1, &abdg()).unwrap();
        let w = AddrWidth::W16;
        let one = CfLog::from_elements(w, vec![LogElement::Symbol(1)]);
        assert_eq!(
            expand(&one, std::slice::from_ref(&spec)).unwrap().elements(),
            &abdg().into_iter().map(raw).collect::<Vec<_>>()[..]
        );
        let three = CfLog::from_elements(w, vec![LogElement::Symbol(1), LogElement::RepeatCount(3)]);
        assert_eq!(expand(&three, std::slice::from_ref(&spec)).unwrap().len(), 9);
        let raw_only = encode_raw(&abdg(), &EngineConfig::default()).unwrap();
        assert_eq!(expand(&raw_only, &[]).unwrap(), raw_only);
        let unknown = CfLog::from_elements(w, vec![LogElement::Symbol(4)]);
        assert_eq!(expand(&unknown, std::slice::from_ref(&spec)).unwrap_err(), EngineError::UnknownSymbol(4));
        let bad = CfLog::from_elements(w, vec![LogElement::RepeatCount(3)]);
        assert!(matches!(expand(&bad, &[spec]), Err(EngineError::Model(ModelError::MalformedLog(_)))));
    }

    #[test]
    fn slices_of_raw_pairs() {
        let trace: Vec<_> = (0..100).map(|i| Transfer::new(0x400 + i, 0x600 + i)).collect();
        let config = EngineConfig::default();
        let slices = slice_compress(&trace, &[], &config).unwrap();
        assert_eq!(slices.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![64, 36]);
        assert_eq!(slices[0].size_bytes(), 256);
        assert_eq!(slices, raw_slices(&trace, &config).unwrap());
        let short = slice_compress(&trace[..10], &[], &config).unwrap();
        assert_eq!(short.len(), 1);
        let empty = slice_compress(&[], &[], &config).unwrap();
        assert_eq!(empty, vec![CfLog::new(AddrWidth::W16)]);
    }

    #[test]
    fn match_straddling_a_slice_stays_raw() {
        let spec = SubPathSpec::pair(1, &abdg()).unwrap();
        let config = EngineConfig { slice_size_bytes: 8, ..EngineConfig::default() };
        // slice holds 2 raw pairs; A->B B->D fill it, D->G starts a new slice
        let slices = slice_compress(&abdg(), std::slice::from_ref(&spec), &config).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].elements(), &[raw(abdg()[0]), raw(abdg()[1])]);
        assert_eq!(slices[1].elements(), &[raw(abdg()[2])]);
        let config = EngineConfig { slice_size_bytes: 12, ..config };
        let slices = slice_compress(&abdg(), &[spec], &config).unwrap();
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].elements(), &[LogElement::Symbol(1)]);
    }

    #[test]
    fn slice_too_small() {
        let config = EngineConfig { slice_size_bytes: 3, ..EngineConfig::default() };
        assert!(matches!(slice_compress(&[], &[], &config), Err(EngineError::SliceTooSmall { .. })));
        let dest = EngineConfig { slice_size_bytes: 2, ..EngineConfig::new(Mode::Dest, AddrWidth::W16) };
        assert!(slice_compress(&[Transfer::to(0x500)], &[], &dest).is_ok());
    }
}
