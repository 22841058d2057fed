//! Candidate mining from raw logs and the Top / Minimize / Select policies.

use std::cmp::Reverse;
use std::collections::HashMap;

use super::{eligible, nested, number, Candidate};
use crate::blockmem::block_size_bytes;
use crate::model::{CfLog, EngineConfig, LogElement, SubPathSpec};
use crate::oracle::oracle_compress;

/// Every distinct window of raw elements with length in `len_range`,
/// counted greedily left to right without overlap, summed over logs.
/// Windows never span a non-raw element. Output is sorted by entries.
pub fn enumerate_candidates(logs: &[CfLog], len_range: (usize, usize)) -> Vec<Candidate> {
    struct Tally {
        count: u64,
        log: usize,
        next_free: usize,
    }
    let (lo, hi) = (len_range.0.max(1), len_range.1);
    let mut tally: HashMap<&[LogElement], Tally> = HashMap::new();
    for (li, log) in logs.iter().enumerate() {
        let elems = log.elements();
        for i in 0..elems.len() {
            for len in lo..=hi {
                let Some(window) = elems.get(i..i + len) else { break };
                if !window[len - 1].is_raw() {
                    break;
                }
                let t = tally.entry(window).or_insert(Tally { count: 0, log: li, next_free: 0 });
                if t.log != li {
                    t.log = li;
                    t.next_free = 0;
                }
                if i >= t.next_free {
                    t.count += 1;
                    t.next_free = i + len;
                }
            }
        }
    }
    let mut out: Vec<Candidate> = tally.into_iter().map(|(w, t)| Candidate::mined(w.to_vec(), t.count)).collect();
    out.sort_by(|a, b| a.entries.cmp(&b.entries));
    out
}

/// Greedily takes candidates in `order`, skipping any nested with an
/// already chosen one, until `n` are chosen.
fn take_unnested<'a>(order: impl IntoIterator<Item = &'a Candidate>, n: usize) -> Vec<&'a Candidate> {
    let mut chosen: Vec<&Candidate> = Vec::new();
    for c in order {
        if chosen.len() == n {
            break;
        }
        if !chosen.iter().any(|s| nested(&s.entries, &c.entries)) {
            chosen.push(c);
        }
    }
    chosen
}

fn sorted_by<K: Ord>(candidates: &[Candidate], key: impl Fn(&Candidate) -> K) -> Vec<&Candidate> {
    let mut v: Vec<&Candidate> = candidates.iter().filter(|c| eligible(c)).collect();
    v.sort_by_key(|c| key(c));
    v
}

/// Highest counts first, ties to the shorter then lexicographically
/// smaller path; no chosen path nested in another.
pub fn policy_top(candidates: &[Candidate], n_paths: usize) -> Vec<SubPathSpec> {
    let order = sorted_by(candidates, |c| (Reverse(c.count), c.len(), c.entries.clone()));
    number(&take_unnested(order, n_paths))
}

/// Seeds with the most frequent of the shortest candidates, then lets a
/// more frequent candidate replace the least frequent selection when its
/// count exceeds that one's by more than `threshold_t` percent.
pub fn policy_minimize(candidates: &[Candidate], n_paths: usize, threshold_t: f64) -> Vec<SubPathSpec> {
    let seed_order = sorted_by(candidates, |c| (c.len(), Reverse(c.count), c.entries.clone()));
    let mut chosen = take_unnested(seed_order, n_paths);
    let by_count = sorted_by(candidates, |c| (Reverse(c.count), c.len(), c.entries.clone()));
    let factor = 1.0 + threshold_t / 100.0;
    for c in by_count {
        if chosen.is_empty() {
            break;
        }
        if chosen.iter().any(|s| s.entries == c.entries) {
            continue;
        }
        // least frequent, latest slot on ties
        let (weakest, _) = chosen.iter().enumerate().min_by_key(|(i, s)| (s.count, Reverse(*i))).expect("non-empty");
        if c.count as f64 <= factor * chosen[weakest].count as f64 {
            continue;
        }
        let clash = chosen.iter().enumerate().any(|(i, s)| i != weakest && nested(&s.entries, &c.entries));
        if !clash {
            chosen[weakest] = c;
        }
    }
    number(&chosen)
}

/// Most frequent first, ties to the longer then lexicographically smaller
/// path; takes each unnested candidate whose block still fits the
/// remaining budget, up to `config.max_sub_paths`.
pub fn policy_select(candidates: &[Candidate], budget_bytes: usize, config: &EngineConfig) -> Vec<SubPathSpec> {
    let order = sorted_by(candidates, |c| (Reverse(c.count), Reverse(c.len()), c.entries.clone()));
    let mut remaining = budget_bytes;
    let mut chosen: Vec<&Candidate> = Vec::new();
    for c in order {
        if chosen.len() == config.max_sub_paths {
            break;
        }
        if c.entries[0].raw_mode() != Some(config.mode) {
            continue;
        }
        let size = block_size_bytes(c.len(), config.mode, config.width);
        if size > remaining || chosen.iter().any(|s| nested(&s.entries, &c.entries)) {
            continue;
        }
        remaining -= size;
        chosen.push(c);
    }
    number(&chosen)
}

/// Bytes saved over `logs` by installing `spec` alone: raw size minus
/// compressed size, minus the spec's block. May be negative.
pub fn estimate_savings(spec: &SubPathSpec, logs: &[CfLog], config: &EngineConfig) -> i64 {
    let config = EngineConfig { mode: spec.mode(), ..config.clone() };
    let spec = spec.with_id(1).expect("id 1 is valid");
    let mut saved: i64 = 0;
    for log in logs {
        let Ok(trace) = log.raw_transfers() else { continue };
        let Ok(compressed) = oracle_compress(&trace, std::slice::from_ref(&spec), &config) else { continue };
        saved += log.size_bytes() as i64 - compressed.size_bytes() as i64;
    }
    saved - block_size_bytes(spec.len(), spec.mode(), config.width) as i64
}
