//! Byte encodings of control-flow logs.
//!
//! `MemoryImage` mirrors the in-memory log word for word: addresses,
//! symbol ids and tagged repeat counters occupy disjoint value ranges, so
//! decoding needs no side channel. `PortableTagged` prefixes each element
//! with a tag byte and carries any address that fits the word width.

use serde::{Deserialize, Serialize};

use crate::model::{AddrWidth, Address, CfLog, EngineConfig, LogElement, Mode, ModelError, Transfer, MAX_REPEAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    MemoryImage,
    PortableTagged,
}

const TAG_PAIR: u8 = 0x00;
const TAG_DEST: u8 = 0x01;
const TAG_SYMBOL: u8 = 0x02;
const TAG_COUNT: u8 = 0x03;

pub(crate) fn put_word(out: &mut Vec<u8>, width: AddrWidth, word: u32) {
    match width {
        AddrWidth::W16 => out.extend_from_slice(&(word as u16).to_le_bytes()),
        AddrWidth::W32 => out.extend_from_slice(&word.to_le_bytes()),
    }
}

pub(crate) fn get_word(bytes: &[u8], width: AddrWidth) -> u32 {
    match width {
        AddrWidth::W16 => u16::from_le_bytes([bytes[0], bytes[1]]) as u32,
        AddrWidth::W32 => u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
    }
}

fn image_address(addr: Address, config: &EngineConfig) -> Result<u32, ModelError> {
    addr.check(config.width)?;
    if addr.0 < config.min_code_addr.0 || addr.0 >= config.counter_tag_bit() {
        return Err(ModelError::EncodingOverlap(addr.0));
    }
    Ok(addr.0)
}

pub fn serialize_log(log: &CfLog, config: &EngineConfig, format: LogFormat) -> Result<Vec<u8>, ModelError> {
    log.check_well_formed()?;
    let width = config.width;
    let mut out = Vec::with_capacity(log.size_bytes() + log.len());
    for e in log.elements() {
        match format {
            LogFormat::MemoryImage => match *e {
                LogElement::RawPair(t) => {
                    put_word(&mut out, width, image_address(t.src, config)?);
                    put_word(&mut out, width, image_address(t.dest, config)?);
                }
                LogElement::RawDest(d) => put_word(&mut out, width, image_address(d, config)?),
                LogElement::Symbol(id) => put_word(&mut out, width, id as u32),
                LogElement::RepeatCount(k) => put_word(&mut out, width, config.counter_tag_bit() | k as u32),
            },
            LogFormat::PortableTagged => match *e {
                LogElement::RawPair(t) => {
                    out.push(TAG_PAIR);
                    put_word(&mut out, width, t.src.check(width)?.0);
                    put_word(&mut out, width, t.dest.check(width)?.0);
                }
                LogElement::RawDest(d) => {
                    out.push(TAG_DEST);
                    put_word(&mut out, width, d.check(width)?.0);
                }
                LogElement::Symbol(id) => {
                    out.push(TAG_SYMBOL);
                    put_word(&mut out, width, id as u32);
                }
                LogElement::RepeatCount(k) => {
                    out.push(TAG_COUNT);
                    put_word(&mut out, width, k as u32);
                }
            },
        }
    }
    Ok(out)
}

fn malformed(msg: impl Into<String>) -> ModelError {
    ModelError::MalformedLog(msg.into())
}

pub fn deserialize_log(bytes: &[u8], config: &EngineConfig, format: LogFormat) -> Result<CfLog, ModelError> {
    let log = match format {
        LogFormat::MemoryImage => decode_image(bytes, config)?,
        LogFormat::PortableTagged => decode_tagged(bytes, config)?,
    };
    log.check_well_formed()?;
    if let Some(m) = log.elements().iter().find_map(|e| e.raw_mode()) {
        if m != config.mode {
            return Err(malformed(format!("{} element in a {} log", m.as_str(), config.mode.as_str())));
        }
    }
    Ok(log)
}

fn decode_image(bytes: &[u8], config: &EngineConfig) -> Result<CfLog, ModelError> {
    let wb = config.word_bytes();
    if !bytes.len().is_multiple_of(wb) {
        return Err(malformed("truncated word"));
    }
    let tag = config.counter_tag_bit();
    let words: Vec<u32> = bytes.chunks_exact(wb).map(|c| get_word(c, config.width)).collect();
    let is_addr = |w: u32| w >= config.min_code_addr.0 && w < tag;
    let mut log = CfLog::new(config.width);
    let mut i = 0;
    while i < words.len() {
        let w = words[i];
        if w & tag != 0 {
            let k = w & !tag;
            if !(2..=MAX_REPEAT as u32).contains(&k) {
                return Err(malformed(format!("repeat count {k} out of range at word {i}")));
            }
            if !matches!(log.last(), Some(LogElement::Symbol(_))) {
                return Err(malformed(format!("repeat count at word {i} does not follow a symbol")));
            }
            log.push(LogElement::RepeatCount(k as u16));
            i += 1;
        } else if (1..=255).contains(&w) {
            log.push(LogElement::Symbol(w as u8));
            i += 1;
        } else if is_addr(w) {
            match config.mode {
                Mode::Dest => {
                    log.push(LogElement::RawDest(Address(w)));
                    i += 1;
                }
                Mode::Pair => {
                    let dest = *words.get(i + 1).ok_or_else(|| malformed("pair missing its destination"))?;
                    if !is_addr(dest) {
                        return Err(malformed(format!("word {} is not a destination address", i + 1)));
                    }
                    log.push(LogElement::RawPair(Transfer { src: Address(w), dest: Address(dest) }));
                    i += 2;
                }
            }
        } else {
            return Err(malformed(format!("word {w:#x} at {i} is in the reserved range")));
        }
    }
    Ok(log)
}

fn decode_tagged(bytes: &[u8], config: &EngineConfig) -> Result<CfLog, ModelError> {
    let wb = config.word_bytes();
    let width = config.width;
    let mut log = CfLog::new(width);
    let mut pos = 0;
    let take = |pos: &mut usize, n: usize| -> Result<Vec<u32>, ModelError> {
        let end = *pos + n * wb;
        if end > bytes.len() {
            return Err(malformed("truncated element"));
        }
        let ws = bytes[*pos..end].chunks_exact(wb).map(|c| get_word(c, width)).collect();
        *pos = end;
        Ok(ws)
    };
    while pos < bytes.len() {
        let tag = bytes[pos];
        pos += 1;
        let e = match tag {
            TAG_PAIR => {
                let w = take(&mut pos, 2)?;
                LogElement::RawPair(Transfer { src: Address(w[0]), dest: Address(w[1]) })
            }
            TAG_DEST => LogElement::RawDest(Address(take(&mut pos, 1)?[0])),
            TAG_SYMBOL => {
                let id = take(&mut pos, 1)?[0];
                if !(1..=255).contains(&id) {
                    return Err(malformed(format!("symbol id {id} out of range")));
                }
                LogElement::Symbol(id as u8)
            }
            TAG_COUNT => {
                let k = take(&mut pos, 1)?[0];
                if !(2..=MAX_REPEAT as u32).contains(&k) {
                    return Err(malformed(format!("repeat count {k} out of range")));
                }
                LogElement::RepeatCount(k as u16)
            }
            other => return Err(malformed(format!("unknown tag {other:#04x}"))),
        };
        log.push(e);
    }
    Ok(log)
}
