//! Reference compressor.
//!
//! Re-derives the engine's output by explicit scanning: each sub-path
//! remembers where its current attempt started in the uncommitted raw
//! tail and re-compares the whole window on every element. Coalescing is
//! decided by inspecting the output tail. Nothing here is shared with
//! `engine`, so agreement between the two is meaningful.

use std::collections::HashSet;

use crate::engine::EngineError;
use crate::model::{encode_raw, CfLog, EngineConfig, LogElement, ModelError, SubPathSpec, Transfer, MAX_REPEAT};

fn validate(specs: &[SubPathSpec], config: &EngineConfig) -> Result<(), EngineError> {
    config.validate()?;
    if specs.len() > config.max_sub_paths {
        return Err(EngineError::TooManySpecs { got: specs.len(), max: config.max_sub_paths });
    }
    let mut ids = HashSet::new();
    for s in specs {
        if s.entries().iter().any(|e| e.raw_mode() != Some(config.mode)) {
            return Err(EngineError::ModeMismatch { id: s.id() });
        }
        if !ids.insert(s.id()) {
            return Err(ModelError::DuplicateId(s.id()).into());
        }
        let max = config.width.max_value();
        let fits = s.entries().iter().all(|e| match e {
            LogElement::RawPair(t) => t.src.0 <= max && t.dest.0 <= max,
            LogElement::RawDest(d) => d.0 <= max,
            _ => false,
        });
        if !fits {
            return Err(ModelError::InvalidSpec(format!("sub-path {} has out-of-range entries", s.id())).into());
        }
    }
    Ok(())
}

fn words(elements: &[LogElement]) -> usize {
    elements.iter().map(|e| if matches!(e, LogElement::RawPair(_)) { 2 } else { 1 }).sum()
}

struct Scanner<'a> {
    specs: &'a [SubPathSpec],
    retry: bool,
    out: Vec<LogElement>,
    tail: Vec<LogElement>,
    starts: Vec<Option<usize>>,
}

impl<'a> Scanner<'a> {
    fn new(specs: &'a [SubPathSpec], retry: bool) -> Self {
        Scanner { specs, retry, out: Vec::new(), tail: Vec::new(), starts: vec![None; specs.len()] }
    }

    fn feed(&mut self, element: LogElement) {
        self.tail.push(element);
        let j = self.tail.len() - 1;
        let mut completed = Vec::new();
        for (i, spec) in self.specs.iter().enumerate() {
            let pattern = spec.entries();
            let mut try_fresh = self.starts[i].is_none();
            if let Some(a) = self.starts[i] {
                let window = &self.tail[a..=j];
                if window.len() <= pattern.len() && window == &pattern[..window.len()] {
                    if window.len() == pattern.len() {
                        completed.push(i);
                    }
                } else {
                    self.starts[i] = None;
                    try_fresh = self.retry;
                }
            }
            if try_fresh && pattern[0] == element {
                if pattern.len() == 1 {
                    completed.push(i);
                } else {
                    self.starts[i] = Some(j);
                }
            }
        }
        if let Some(&w) = completed.iter().min() {
            let spec = &self.specs[w];
            let keep = self.tail.len() - spec.len();
            self.out.extend_from_slice(&self.tail[..keep]);
            self.tail.clear();
            self.starts.iter_mut().for_each(|s| *s = None);
            self.emit_symbol(spec.id());
        }
    }

    fn emit_symbol(&mut self, id: u8) {
        let n = self.out.len();
        match self.out.as_slice() {
            [.., LogElement::Symbol(s)] if *s == id => self.out.push(LogElement::RepeatCount(2)),
            [.., LogElement::Symbol(s), LogElement::RepeatCount(k)] if *s == id && *k < MAX_REPEAT => {
                self.out[n - 1] = LogElement::RepeatCount(k + 1)
            }
            _ => self.out.push(LogElement::Symbol(id)),
        }
    }

    fn pending_words(&self) -> usize {
        words(&self.out) + words(&self.tail)
    }

    fn drain(&mut self) -> Vec<LogElement> {
        let mut all = std::mem::take(&mut self.out);
        all.append(&mut self.tail);
        self.starts.iter_mut().for_each(|s| *s = None);
        all
    }
}

/// Compresses `trace` with the same greedy, priority-ordered semantics
/// as [`crate::engine::compress_trace`].
pub fn oracle_compress(trace: &[Transfer], specs: &[SubPathSpec], config: &EngineConfig) -> Result<CfLog, EngineError> {
    validate(specs, config)?;
    let raw = encode_raw(trace, config)?;
    let mut scanner = Scanner::new(specs, config.retry_on_mismatch);
    for e in raw.elements() {
        scanner.feed(*e);
    }
    Ok(CfLog::from_elements(config.width, scanner.drain()))
}

/// Slice-bounded variant of [`oracle_compress`].
pub fn oracle_slice_compress(
    trace: &[Transfer],
    specs: &[SubPathSpec],
    config: &EngineConfig,
) -> Result<Vec<CfLog>, EngineError> {
    validate(specs, config)?;
    let wb = config.width.word_bytes();
    let elem_bytes = config.raw_element_bytes();
    if config.slice_size_bytes < elem_bytes {
        return Err(EngineError::SliceTooSmall { slice: config.slice_size_bytes, needed: elem_bytes });
    }
    let raw = encode_raw(trace, config)?;
    let mut scanner = Scanner::new(specs, config.retry_on_mismatch);
    let mut slices = Vec::new();
    for e in raw.elements() {
        if scanner.pending_words() * wb + elem_bytes > config.slice_size_bytes {
            slices.push(CfLog::from_elements(config.width, scanner.drain()));
        }
        scanner.feed(*e);
    }
    let last = scanner.drain();
    if slices.is_empty() || !last.is_empty() {
        slices.push(CfLog::from_elements(config.width, last));
    }
    Ok(slices)
}
