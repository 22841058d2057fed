//! Static candidates from CFG segmentation.
//!
//! Leaders are function entries, loop headers, loop exit targets and call
//! continuations. Edges into a leader, retreating edges and call/return
//! edges are cut; the weakly connected pieces of what remains are the
//! segments. Inside a segment only real, non-retreating edges are
//! followed, so every segment is a DAG.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{Candidate, Origin, SelectionError};
use crate::blockmem::block_size_bytes;
use crate::cfg::{find_loops, BlockId, Cfg, LoopInfo};
use crate::model::{EngineConfig, LogElement, Mode, SubPathSpec, Transfer};

pub const DEFAULT_PATH_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BoundaryKind {
    GraphEntry,
    LoopHeader,
    LoopExit,
    CallReturn,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub function: usize,
    pub blocks: BTreeSet<BlockId>,
    pub boundary_kind: BoundaryKind,
    /// Indices of segments reached by an edge leaving this one.
    pub successors: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPath {
    pub function: usize,
    pub blocks: Vec<BlockId>,
    pub transfers: Vec<Transfer>,
}

fn leader_kinds(cfg: &Cfg, loops: &LoopInfo) -> BTreeMap<BlockId, BoundaryKind> {
    let mut leaders = BTreeMap::new();
    let mut mark = |b: BlockId, k: BoundaryKind| {
        let e = leaders.entry(b).or_insert(k);
        *e = (*e).min(k);
    };
    for f in cfg.functions() {
        mark(f.entry, BoundaryKind::GraphEntry);
    }
    for l in &loops.loops {
        mark(l.header, BoundaryKind::LoopHeader);
        for &b in &l.blocks {
            for e in cfg.intra_successors(b) {
                if !l.blocks.contains(&e.to) && !e.synthetic {
                    mark(e.to, BoundaryKind::LoopExit);
                }
            }
        }
    }
    for b in cfg.blocks() {
        if let Some(c) = cfg.call_continuation(b.id) {
            mark(c, BoundaryKind::CallReturn);
        }
    }
    leaders
}

/// Real, non-retreating intra-function edges with both ends in `blocks`.
fn internal_edges(
    cfg: &Cfg,
    blocks: &BTreeSet<BlockId>,
    back: &HashSet<(BlockId, BlockId)>,
) -> Vec<(BlockId, BlockId)> {
    blocks
        .iter()
        .flat_map(|&b| cfg.intra_successors(b))
        .filter(|e| !e.synthetic && blocks.contains(&e.to) && !back.contains(&(e.from, e.to)))
        .map(|e| (e.from, e.to))
        .collect()
}

pub fn segment_cfg(cfg: &Cfg, loops: &LoopInfo) -> Vec<Segment> {
    let leaders = leader_kinds(cfg, loops);
    let back = cfg.retreating_edges();
    // union-find over kept edges
    let ids: Vec<BlockId> = cfg.blocks().map(|b| b.id).collect();
    let index: BTreeMap<BlockId, usize> = ids.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &b in &ids {
        for e in cfg.intra_successors(b) {
            if e.synthetic || back.contains(&(e.from, e.to)) || leaders.contains_key(&e.to) {
                continue;
            }
            let (x, y) = (find(&mut parent, index[&e.from]), find(&mut parent, index[&e.to]));
            parent[x.max(y)] = x.min(y);
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<BlockId>> = BTreeMap::new();
    for (i, &b) in ids.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().insert(b);
    }
    let mut segments: Vec<Segment> = groups
        .into_values()
        .map(|blocks| {
            let first = *blocks.iter().next().expect("non-empty group");
            let boundary_kind =
                blocks.iter().filter_map(|b| leaders.get(b)).min().copied().unwrap_or(BoundaryKind::Interior);
            Segment { function: cfg.block(first).function, blocks, boundary_kind, successors: BTreeSet::new() }
        })
        .collect();
    let seg_of: BTreeMap<BlockId, usize> =
        segments.iter().enumerate().flat_map(|(i, s)| s.blocks.iter().map(move |&b| (b, i))).collect();
    for &b in &ids {
        for e in cfg.intra_successors(b) {
            let (s, t) = (seg_of[&e.from], seg_of[&e.to]);
            if s != t {
                segments[s].successors.insert(t);
            }
        }
    }
    segments
}

/// Fuses each segment having exactly one successor into that successor,
/// lowest index first, until no such segment remains.
pub fn merge_segments(segments: Vec<Segment>) -> Vec<Segment> {
    let mut live: BTreeMap<usize, Segment> = segments.into_iter().enumerate().collect();
    loop {
        let pick =
            live.iter().find(|(_, s)| s.successors.len() == 1).map(|(&i, s)| (i, *s.successors.iter().next().unwrap()));
        let Some((s, t)) = pick else { break };
        let src = live.remove(&s).expect("live");
        let dst = live.get_mut(&t).expect("successor is live");
        dst.blocks.extend(src.blocks);
        dst.boundary_kind = dst.boundary_kind.min(src.boundary_kind);
        dst.successors.extend(src.successors);
        dst.successors.remove(&s);
        dst.successors.remove(&t);
        for seg in live.values_mut() {
            if seg.successors.remove(&s) {
                seg.successors.insert(t);
            }
        }
        live.get_mut(&t).unwrap().successors.remove(&t);
    }
    let renumber: BTreeMap<usize, usize> = live.keys().enumerate().map(|(n, &o)| (o, n)).collect();
    live.into_values()
        .map(|mut s| {
            s.successors = s.successors.iter().map(|o| renumber[o]).collect();
            s
        })
        .collect()
}

/// All source-to-sink block paths of `segment`, as transfers. A path whose
/// last block has a retreating edge back to its first block is closed
/// with that edge's transfer. Paths with no transfer are dropped.
pub fn enumerate_segment_paths(segment: &Segment, cfg: &Cfg, cap: usize) -> Result<Vec<BlockPath>, SelectionError> {
    let back = cfg.retreating_edges();
    enumerate_with(segment, cfg, cap, &back, 0)
}

fn enumerate_with(
    segment: &Segment,
    cfg: &Cfg,
    cap: usize,
    back: &HashSet<(BlockId, BlockId)>,
    seg_index: usize,
) -> Result<Vec<BlockPath>, SelectionError> {
    let edges = internal_edges(cfg, &segment.blocks, back);
    let mut succ: BTreeMap<BlockId, Vec<BlockId>> = BTreeMap::new();
    let mut has_pred = BTreeSet::new();
    for &(a, b) in &edges {
        succ.entry(a).or_default().push(b);
        has_pred.insert(b);
    }
    let edge_transfer = |a: BlockId, b: BlockId| Transfer { src: cfg.block(a).end, dest: cfg.block(b).start };
    let mut paths = Vec::new();
    for &src in segment.blocks.iter().filter(|b| !has_pred.contains(b)) {
        let mut stack: Vec<(Vec<BlockId>, usize)> = vec![(vec![src], 0)];
        while let Some((path, next)) = stack.pop() {
            let last = *path.last().unwrap();
            let outs = succ.get(&last).map(Vec::as_slice).unwrap_or(&[]);
            if outs.is_empty() {
                let mut transfers: Vec<Transfer> = path.windows(2).map(|w| edge_transfer(w[0], w[1])).collect();
                if back.contains(&(last, path[0])) {
                    transfers.push(edge_transfer(last, path[0]));
                }
                if !transfers.is_empty() {
                    if paths.len() == cap {
                        return Err(SelectionError::PathExplosion { segment: seg_index, cap });
                    }
                    paths.push(BlockPath { function: segment.function, blocks: path, transfers });
                }
                continue;
            }
            if next + 1 < outs.len() {
                stack.push((path.clone(), next + 1));
            }
            let mut longer = path;
            longer.push(outs[next]);
            stack.push((longer, 0));
        }
    }
    Ok(paths)
}

/// Priority classes: 1 inside a common loop, 2 in a max-branching
/// function (most branching blocks among contributing functions), 3 in a
/// function called from a loop or from a max-branching function. Functions
/// never called (other than the entry function) or without internal
/// branches contribute nothing. Sorted by class, then length, then
/// entries; duplicates keep their best rank.
pub fn rank_static(cfg: &Cfg, loops: &LoopInfo, paths: &[BlockPath], mode: Mode) -> Vec<Candidate> {
    let n_fn = cfg.functions().len();
    let branches: Vec<usize> = (0..n_fn).map(|f| cfg.branch_count(f)).collect();
    let called = cfg.called_functions();
    let excluded: Vec<bool> =
        (0..n_fn).map(|f| branches[f] == 0 || (f != cfg.entry_function() && !called.contains(&f))).collect();
    let max_branches = (0..n_fn).filter(|&f| !excluded[f]).map(|f| branches[f]).max().unwrap_or(0);
    let max_branching: BTreeSet<usize> = (0..n_fn).filter(|&f| !excluded[f] && branches[f] == max_branches).collect();
    let mut called_from_hot = BTreeSet::new();
    for e in cfg.edges().iter().filter(|e| e.kind == crate::cfg::EdgeKind::Call) {
        if loops.in_loop(e.from) || max_branching.contains(&cfg.block(e.from).function) {
            called_from_hot.insert(cfg.block(e.to).function);
        }
    }
    let mut best: BTreeMap<Vec<LogElement>, u8> = BTreeMap::new();
    for p in paths {
        if excluded[p.function] {
            continue;
        }
        let mut common = loops.loops_of(p.blocks[0]);
        for b in &p.blocks[1..] {
            common = common.intersection(&loops.loops_of(*b)).copied().collect();
        }
        let class = if !common.is_empty() {
            1
        } else if max_branching.contains(&p.function) {
            2
        } else if called_from_hot.contains(&p.function) {
            3
        } else {
            4
        };
        let entries: Vec<LogElement> = p.transfers.iter().map(|t| t.to_element(mode)).collect();
        let e = best.entry(entries).or_insert(class);
        *e = (*e).min(class);
    }
    let mut out: Vec<Candidate> = best
        .into_iter()
        .map(|(entries, class)| Candidate {
            entries,
            count: 0,
            origin: Origin::Static,
            static_priority: (class <= 3).then_some(class),
        })
        .collect();
    out.sort_by(|a, b| {
        (a.static_priority.unwrap_or(4), a.len(), &a.entries).cmp(&(
            b.static_priority.unwrap_or(4),
            b.len(),
            &b.entries,
        ))
    });
    out
}

/// Segments, merged segments and their paths, ranked.
pub fn static_candidates(cfg: &Cfg, mode: Mode, cap: usize) -> Result<Vec<Candidate>, SelectionError> {
    let loops = find_loops(cfg);
    let back = cfg.retreating_edges();
    let plain = segment_cfg(cfg, &loops);
    let merged = merge_segments(plain.clone());
    let mut paths = Vec::new();
    let mut seen = HashSet::new();
    for (i, seg) in plain.iter().chain(merged.iter()).enumerate() {
        for p in enumerate_with(seg, cfg, cap, &back, i)? {
            if seen.insert(p.blocks.clone()) {
                paths.push(p);
            }
        }
    }
    Ok(rank_static(cfg, &loops, &paths, mode))
}

/// Takes ranked candidates in order, skipping any sharing an entry with
/// one already taken, until `n_paths` are taken or the next block does
/// not fit the remaining budget.
pub fn select_static(
    ranked: &[Candidate],
    n_paths: usize,
    budget_bytes: usize,
    config: &EngineConfig,
) -> Vec<SubPathSpec> {
    let mut remaining = budget_bytes;
    let mut used: HashSet<LogElement> = HashSet::new();
    let mut chosen: Vec<&Candidate> = Vec::new();
    for c in ranked.iter().filter(|c| super::eligible(c) && c.entries[0].raw_mode() == Some(config.mode)) {
        if chosen.len() == n_paths {
            break;
        }
        if c.entries.iter().any(|e| used.contains(e)) {
            continue;
        }
        let size = block_size_bytes(c.len(), config.mode, config.width);
        if size > remaining {
            break;
        }
        remaining -= size;
        used.extend(c.entries.iter().copied());
        chosen.push(c);
    }
    super::number(&chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::tests::graph;

    fn segs(cfg: &Cfg) -> Vec<Segment> {
        segment_cfg(cfg, &find_loops(cfg))
    }

    fn assert_acyclic(cfg: &Cfg, seg: &Segment) {
        let edges = internal_edges(cfg, &seg.blocks, &cfg.retreating_edges());
        let mut indeg: BTreeMap<BlockId, usize> = seg.blocks.iter().map(|&b| (b, 0)).collect();
        for &(_, b) in &edges {
            *indeg.get_mut(&b).unwrap() += 1;
        }
        let mut ready: Vec<BlockId> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&b, _)| b).collect();
        let mut seen = 0;
        while let Some(b) = ready.pop() {
            seen += 1;
            for &(a, c) in &edges {
                if a == b {
                    let d = indeg.get_mut(&c).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(c);
                    }
                }
            }
        }
        assert_eq!(seen, seg.blocks.len(), "segment has a cycle");
    }

    #[test]
    fn loop_free_function_is_one_segment() {
        let cfg = graph(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let s = segs(&cfg);
        assert_eq!(s.len(), 1);
        let paths = enumerate_segment_paths(&s[0], &cfg, DEFAULT_PATH_CAP).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].transfers.len(), 2);
    }

    #[test]
    fn one_loop_splits_in_three() {
        // 0 pre, 1 header, 2 body, 3 exit
        let cfg = graph(4, &[(0, 1), (1, 2), (2, 1), (1, 3)]);
        let s = segs(&cfg);
        assert!(s.len() >= 3);
        for seg in &s {
            assert_acyclic(&cfg, seg);
        }
        let body = s.iter().find(|g| g.blocks.contains(&2)).unwrap();
        assert_eq!(body.boundary_kind, BoundaryKind::LoopHeader);
        let paths = enumerate_segment_paths(body, &cfg, DEFAULT_PATH_CAP).unwrap();
        // header -> body closed by the back edge
        assert_eq!(paths[0].transfers, vec![Transfer::new(0x41c, 0x420), Transfer::new(0x42c, 0x410)]);
        let merged = merge_segments(s);
        assert_eq!(merged.len(), 1);
        assert_acyclic(&cfg, &merged[0]);
    }

    #[test]
    fn chain_merges_to_one() {
        let seg = |succ: &[usize]| Segment {
            function: 0,
            blocks: BTreeSet::new(),
            boundary_kind: BoundaryKind::Interior,
            successors: succ.iter().copied().collect(),
        };
        let merged = merge_segments(vec![seg(&[1]), seg(&[2]), seg(&[3]), seg(&[])]);
        assert_eq!(merged.len(), 1);
        // a fork is left alone
        assert_eq!(merge_segments(vec![seg(&[1, 2]), seg(&[]), seg(&[])]).len(), 3);
    }

    #[test]
    fn path_cap() {
        // ladder of diamonds: 2^5 paths
        let mut edges = Vec::new();
        for k in 0..5u32 {
            let b = 3 * k;
            edges.extend([(b, b + 1), (b, b + 2), (b + 1, b + 3), (b + 2, b + 3)]);
        }
        let cfg = graph(16, &edges);
        let s = segs(&cfg);
        assert_eq!(enumerate_segment_paths(&s[0], &cfg, 32).unwrap().len(), 32);
        assert!(matches!(enumerate_segment_paths(&s[0], &cfg, 31), Err(SelectionError::PathExplosion { cap: 31, .. })));
    }

    #[test]
    fn select_static_skips_overlap_and_stops_on_budget() {
        let t = |x: u32| LogElement::RawPair(Transfer::new(x, x + 2));
        let c = |xs: &[u32], class: u8| Candidate {
            entries: xs.iter().map(|&x| t(x)).collect(),
            count: 0,
            origin: Origin::Static,
            static_priority: Some(class),
        };
        let ranked = [c(&[1, 2], 1), c(&[2, 3], 1), c(&[5, 6, 7], 1), c(&[8], 2)];
        let config = EngineConfig::default();
        let specs = select_static(&ranked, 8, 1000, &config);
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[1].len(), 3);
        // budget fits the first block only: the 3-long block stops the scan
        let specs = select_static(&ranked, 8, 10 + 2, &config);
        assert_eq!(specs.len(), 1);
        assert_eq!(select_static(&ranked, 1, 1000, &config).len(), 1);
    }
}
