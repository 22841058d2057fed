//! Block memory layout for installed sub-paths.
//!
//! Each block starts with a header word `(id << 8) | len`, followed by
//! `len` entries: a `(src, dest)` word pair per transfer in pair mode, or
//! one destination word per entry in dest mode. Blocks are packed back to
//! back, so in pair mode block `i` starts at word
//! `base(i-1) + 2 * len(i-1) + 1`.

use std::collections::HashSet;

use crate::codec::{get_word, put_word};
use crate::model::{AddrWidth, Address, EngineConfig, LogElement, Mode, ModelError, SubPathSpec, Transfer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMemImage {
    pub bytes: Vec<u8>,
    pub capacity_bytes: usize,
}

impl BlockMemImage {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// Words per sub-path entry.
fn entry_words(mode: Mode) -> usize {
    match mode {
        Mode::Pair => 2,
        Mode::Dest => 1,
    }
}

/// Encoded size in bytes of one block holding `len` entries.
pub fn block_size_bytes(len: usize, mode: Mode, width: AddrWidth) -> usize {
    (1 + len * entry_words(mode)) * width.word_bytes()
}

/// Total encoded size of a spec set.
pub fn blockmem_size_bytes(specs: &[SubPathSpec], width: AddrWidth) -> usize {
    specs.iter().map(|s| block_size_bytes(s.len(), s.mode(), width)).sum()
}

/// Word offset of each block.
pub fn block_bases(specs: &[SubPathSpec]) -> Vec<usize> {
    let mut base = 0;
    specs
        .iter()
        .map(|s| {
            let b = base;
            base += 1 + s.len() * entry_words(s.mode());
            b
        })
        .collect()
}

pub fn serialize_blockmem(specs: &[SubPathSpec], config: &EngineConfig) -> Result<BlockMemImage, ModelError> {
    let mut seen = HashSet::new();
    for s in specs {
        if !seen.insert(s.id()) {
            return Err(ModelError::DuplicateId(s.id()));
        }
        if s.len() > 255 {
            return Err(ModelError::LenOverflow(s.len()));
        }
        if s.mode() != config.mode {
            return Err(ModelError::InvalidSpec(format!(
                "sub-path {} is {} mode, config is {}",
                s.id(),
                s.mode().as_str(),
                config.mode.as_str()
            )));
        }
    }
    let needed = blockmem_size_bytes(specs, config.width);
    if needed > config.blockmem_capacity_bytes {
        return Err(ModelError::CapacityExceeded { needed, capacity: config.blockmem_capacity_bytes });
    }
    let width = config.width;
    let mut bytes = Vec::with_capacity(needed);
    for s in specs {
        put_word(&mut bytes, width, ((s.id() as u32) << 8) | s.len() as u32);
        for e in s.entries() {
            match *e {
                LogElement::RawPair(t) => {
                    put_word(&mut bytes, width, t.src.check(width)?.0);
                    put_word(&mut bytes, width, t.dest.check(width)?.0);
                }
                LogElement::RawDest(d) => put_word(&mut bytes, width, d.check(width)?.0),
                _ => unreachable!("spec entries are raw"),
            }
        }
    }
    Ok(BlockMemImage { bytes, capacity_bytes: config.blockmem_capacity_bytes })
}

fn malformed(msg: impl Into<String>) -> ModelError {
    ModelError::MalformedBlockMem(msg.into())
}

pub fn deserialize_blockmem(bytes: &[u8], config: &EngineConfig) -> Result<Vec<SubPathSpec>, ModelError> {
    let wb = config.word_bytes();
    if !bytes.len().is_multiple_of(wb) {
        return Err(malformed("truncated word"));
    }
    let words: Vec<u32> = bytes.chunks_exact(wb).map(|c| get_word(c, config.width)).collect();
    let mut specs = Vec::new();
    let mut seen = HashSet::new();
    let mut i = 0;
    while i < words.len() {
        let header = words[i];
        if header >> 16 != 0 {
            return Err(malformed(format!("header word {header:#x} at {i} has high bits set")));
        }
        let id = (header >> 8) as u8;
        let len = (header & 0xff) as usize;
        if id == 0 {
            return Err(malformed(format!("block at word {i} has id 0")));
        }
        if len == 0 {
            return Err(malformed(format!("block {id} has length 0")));
        }
        if !seen.insert(id) {
            return Err(ModelError::DuplicateId(id));
        }
        let n = len * entry_words(config.mode);
        let body = words.get(i + 1..i + 1 + n).ok_or_else(|| malformed(format!("block {id} truncated")))?;
        let entries = match config.mode {
            Mode::Pair => body
                .chunks_exact(2)
                .map(|p| LogElement::RawPair(Transfer { src: Address(p[0]), dest: Address(p[1]) }))
                .collect(),
            Mode::Dest => body.iter().map(|d| LogElement::RawDest(Address(*d))).collect(),
        };
        specs.push(SubPathSpec::new(id, entries)?);
        i += 1 + n;
    }
    Ok(specs)
}
