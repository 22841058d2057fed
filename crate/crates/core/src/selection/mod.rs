//! Verifier-side choice of sub-paths to install.
//!
//! Candidates come either from prior raw logs ([`mining`]) or from a
//! static walk over the CFG ([`segments`]). Policies turn a candidate
//! list into an id-numbered spec set.

use thiserror::Error;

use crate::model::{LogElement, ModelError, SubPathSpec, MAX_SUB_PATHS};

pub mod mining;
pub mod segments;

pub use mining::{enumerate_candidates, estimate_savings, policy_minimize, policy_select, policy_top};
pub use segments::{
    enumerate_segment_paths, merge_segments, rank_static, segment_cfg, select_static, static_candidates, BlockPath,
    BoundaryKind, Segment, DEFAULT_PATH_CAP,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("segment {segment} has more than {cap} paths")]
    PathExplosion { segment: usize, cap: usize },
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Mined,
    Static,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub entries: Vec<LogElement>,
    /// Greedy non-overlapping occurrences across the mined logs; 0 for
    /// static candidates.
    pub count: u64,
    pub origin: Origin,
    /// Static priority class 1..=3; `None` sorts after all classes.
    pub static_priority: Option<u8>,
}

impl Candidate {
    pub fn mined(entries: Vec<LogElement>, count: u64) -> Self {
        Candidate { entries, count, origin: Origin::Mined, static_priority: None }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub n_paths: usize,
    /// Inclusive window length bounds for mining.
    pub len_range: (usize, usize),
    /// Percentage for Minimize replacement.
    pub threshold_t: f64,
    pub budget_bytes: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { n_paths: MAX_SUB_PATHS, len_range: (2, 16), threshold_t: 100.0, budget_bytes: 2048 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |m: &str| Err(SelectionError::InvalidConfig(m.to_string()));
        if !(1..=MAX_SUB_PATHS).contains(&self.n_paths) {
            return bad("n_paths must be in 1..=8");
        }
        let (lo, hi) = self.len_range;
        if lo < 1 || lo > hi || hi > 255 {
            return bad("len_range must satisfy 1 <= min <= max <= 255");
        }
        if self.threshold_t.is_nan() || self.threshold_t <= 0.0 {
            return bad("threshold_t must be positive");
        }
        Ok(())
    }
}

/// `a` occurs as a contiguous run inside `b`.
pub fn is_subsequence(a: &[LogElement], b: &[LogElement]) -> bool {
    !a.is_empty() && a.len() <= b.len() && b.windows(a.len()).any(|w| w == a)
}

/// Either path is a contiguous run of the other.
pub fn nested(a: &[LogElement], b: &[LogElement]) -> bool {
    is_subsequence(a, b) || is_subsequence(b, a)
}

/// Candidates that can become a spec: 1..=255 raw entries of one mode.
pub(crate) fn eligible(c: &Candidate) -> bool {
    SubPathSpec::new(1, c.entries.clone()).is_ok()
}

/// Numbers eligible chosen candidates 1.. in order.
pub(crate) fn number(chosen: &[&Candidate]) -> Vec<SubPathSpec> {
    chosen
        .iter()
        .enumerate()
        .map(|(i, c)| SubPathSpec::new(i as u8 + 1, c.entries.clone()).expect("eligible candidate"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Transfer;

    fn p(xs: &[u32]) -> Vec<LogElement> {
        xs.iter().map(|&x| LogElement::RawPair(Transfer::new(x, x + 1))).collect()
    }

    #[test]
    fn nesting() {
        assert!(nested(&p(&[1, 2]), &p(&[0, 1, 2, 3])));
        assert!(nested(&p(&[0, 1, 2, 3]), &p(&[1, 2])));
        assert!(nested(&p(&[1, 2]), &p(&[1, 2])));
        assert!(!nested(&p(&[1, 3]), &p(&[1, 2, 3])));
    }

    #[test]
    fn config_validation() {
        assert!(PolicyConfig::default().validate().is_ok());
        assert!(PolicyConfig { n_paths: 0, ..Default::default() }.validate().is_err());
        assert!(PolicyConfig { len_range: (3, 2), ..Default::default() }.validate().is_err());
        assert!(PolicyConfig { threshold_t: 0.0, ..Default::default() }.validate().is_err());
    }
}
