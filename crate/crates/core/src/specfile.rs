//! Human-editable spec set documents (TOML).
//!
//! ```toml
//! [[spec]]
//! id = 1
//! mode = "pair"
//! entries = ["0x0400->0x0520", "0x0524->0x0540"]
//!
//! [[spec]]
//! id = 2
//! mode = "dest"
//! entries = ["0x0600", "0x0640"]
//! ```

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::model::{Address, LogElement, Mode, ModelError, SubPathSpec, Transfer};

#[derive(Debug, Default, Serialize, Deserialize)]
struct SpecSetDoc {
    #[serde(default)]
    spec: Vec<SpecRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpecRecord {
    id: u8,
    mode: Mode,
    entries: Vec<String>,
}

/// Parses `0x1a2b` or `1a2b`.
pub fn parse_hex(s: &str) -> Option<u32> {
    let s = s.trim();
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if digits.is_empty() {
        return None;
    }
    u32::from_str_radix(digits, 16).ok()
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::SpecFile(msg.into())
}

pub fn parse_spec_set(text: &str) -> Result<Vec<SubPathSpec>, ModelError> {
    let doc: SpecSetDoc = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
    let mut ids = HashSet::new();
    let mut specs = Vec::with_capacity(doc.spec.len());
    for rec in doc.spec {
        if !ids.insert(rec.id) {
            return Err(ModelError::DuplicateId(rec.id));
        }
        let entries = rec
            .entries
            .iter()
            .map(|raw| match rec.mode {
                Mode::Pair => {
                    let (s, d) = raw
                        .split_once("->")
                        .ok_or_else(|| bad(format!("spec {}: pair entry {raw:?} needs src->dest", rec.id)))?;
                    let src = parse_hex(s).ok_or_else(|| bad(format!("spec {}: bad hex {s:?}", rec.id)))?;
                    let dest = parse_hex(d).ok_or_else(|| bad(format!("spec {}: bad hex {d:?}", rec.id)))?;
                    Ok(LogElement::RawPair(Transfer::new(src, dest)))
                }
                Mode::Dest => parse_hex(raw)
                    .map(|d| LogElement::RawDest(Address(d)))
                    .ok_or_else(|| bad(format!("spec {}: bad hex {raw:?}", rec.id))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        specs.push(SubPathSpec::new(rec.id, entries)?);
    }
    Ok(specs)
}

pub fn write_spec_set(specs: &[SubPathSpec]) -> String {
    let doc = SpecSetDoc {
        spec: specs
            .iter()
            .map(|s| SpecRecord {
                id: s.id(),
                mode: s.mode(),
                entries: s
                    .entries()
                    .iter()
                    .map(|e| match e {
                        LogElement::RawPair(t) => format!("{:#06x}->{:#06x}", t.src.0, t.dest.0),
                        LogElement::RawDest(d) => format!("{:#06x}", d.0),
                        _ => unreachable!("spec entries are raw"),
                    })
                    .collect(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("spec set serializes")
}
