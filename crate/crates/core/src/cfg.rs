//! Control-flow graphs loaded from a structured document.
//!
//! ```toml
//! entry = "main"
//!
//! [[function]]
//! name = "main"
//! entry = 0
//!
//! [[block]]
//! id = 0
//! start = "0x0400"
//! end = "0x0408"
//! function = "main"
//!
//! [[edge]]
//! from = 0
//! to = 1
//! kind = "cond_true"
//! ```
//!
//! A CFG edge becomes the transfer `(end(from), start(to))`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Address, Transfer};
use crate::specfile::parse_hex;

pub type BlockId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("malformed CFG: {0}")]
    Malformed(String),
}

fn malformed(msg: impl Into<String>) -> CfgError {
    CfgError::Malformed(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Jump,
    CondTrue,
    CondFalse,
    Call,
    Return,
    Fallthrough,
}

impl EdgeKind {
    pub fn is_interprocedural(self) -> bool {
        matches!(self, EdgeKind::Call | EdgeKind::Return)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CfgDocument {
    /// Name of the function execution starts in; defaults to the first one.
    #[serde(default)]
    pub entry: Option<String>,
    #[serde(default)]
    pub function: Vec<FunctionRecord>,
    #[serde(default)]
    pub block: Vec<BlockRecord>,
    #[serde(default)]
    pub edge: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub name: String,
    pub entry: BlockId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockRecord {
    pub id: BlockId,
    pub start: String,
    pub end: String,
    pub function: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: BlockId,
    pub to: BlockId,
    pub kind: EdgeKind,
}

impl CfgDocument {
    pub fn parse(text: &str) -> Result<Self, CfgError> {
        toml::from_str(text).map_err(|e| malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub entry: BlockId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub start: Address,
    pub end: Address,
    /// Index into [`Cfg::functions`].
    pub function: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: BlockId,
    pub to: BlockId,
    pub kind: EdgeKind,
}

/// Edge of the per-function view. Call sites are linked to their
/// continuation by a synthetic edge that carries no transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntraEdge {
    pub from: BlockId,
    pub to: BlockId,
    pub synthetic: bool,
}

#[derive(Debug, Clone)]
pub struct Cfg {
    functions: Vec<Function>,
    entry_function: usize,
    blocks: BTreeMap<BlockId, BasicBlock>,
    edges: Vec<Edge>,
    out: BTreeMap<BlockId, Vec<usize>>,
    by_start: HashMap<u32, BlockId>,
}

pub fn build_cfg(doc: &CfgDocument) -> Result<Cfg, CfgError> {
    if doc.function.is_empty() {
        return Err(malformed("no functions"));
    }
    let mut fn_index = HashMap::new();
    for (i, f) in doc.function.iter().enumerate() {
        if fn_index.insert(f.name.as_str(), i).is_some() {
            return Err(malformed(format!("duplicate function {}", f.name)));
        }
    }
    let entry_function = match &doc.entry {
        Some(name) => *fn_index.get(name.as_str()).ok_or_else(|| malformed(format!("no entry function {name}")))?,
        None => 0,
    };
    let mut blocks = BTreeMap::new();
    let mut by_start = HashMap::new();
    for b in &doc.block {
        let start = parse_hex(&b.start).ok_or_else(|| malformed(format!("block {}: bad start", b.id)))?;
        let end = parse_hex(&b.end).ok_or_else(|| malformed(format!("block {}: bad end", b.id)))?;
        if start > end {
            return Err(malformed(format!("block {}: start after end", b.id)));
        }
        let function = *fn_index
            .get(b.function.as_str())
            .ok_or_else(|| malformed(format!("block {}: unknown function {}", b.id, b.function)))?;
        if by_start.insert(start, b.id).is_some() {
            return Err(malformed(format!("block {}: start {start:#x} already used", b.id)));
        }
        let block = BasicBlock { id: b.id, start: Address(start), end: Address(end), function };
        if blocks.insert(b.id, block).is_some() {
            return Err(malformed(format!("duplicate block {}", b.id)));
        }
    }
    for f in &doc.function {
        match blocks.get(&f.entry) {
            None => return Err(malformed(format!("function {}: entry block {} missing", f.name, f.entry))),
            Some(b) if doc.function[b.function].name != f.name => {
                return Err(malformed(format!("function {}: entry block {} belongs elsewhere", f.name, f.entry)))
            }
            _ => {}
        }
    }
    let mut edges = Vec::with_capacity(doc.edge.len());
    let mut out: BTreeMap<BlockId, Vec<usize>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for e in &doc.edge {
        for end in [e.from, e.to] {
            if !blocks.contains_key(&end) {
                return Err(malformed(format!("edge {}->{}: dangling block {end}", e.from, e.to)));
            }
        }
        if !seen.insert((e.from, e.to)) {
            return Err(malformed(format!("duplicate edge {}->{}", e.from, e.to)));
        }
        out.entry(e.from).or_default().push(edges.len());
        edges.push(Edge { from: e.from, to: e.to, kind: e.kind });
    }
    Ok(Cfg {
        functions: doc.function.iter().map(|f| Function { name: f.name.clone(), entry: f.entry }).collect(),
        entry_function,
        blocks,
        edges,
        out,
        by_start,
    })
}

impl Cfg {
    pub fn from_toml(text: &str) -> Result<Self, CfgError> {
        build_cfg(&CfgDocument::parse(text)?)
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn entry_function(&self) -> usize {
        self.entry_function
    }

    pub fn entry_block(&self) -> BlockId {
        self.functions[self.entry_function].entry
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BasicBlock> {
        self.blocks.values()
    }

    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[&id]
    }

    pub fn block_starting_at(&self, addr: Address) -> Option<BlockId> {
        self.by_start.get(&addr.0).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, id: BlockId) -> impl Iterator<Item = &Edge> {
        self.out.get(&id).into_iter().flatten().map(|&i| &self.edges[i])
    }

    pub fn transfer(&self, edge: &Edge) -> Transfer {
        Transfer { src: self.blocks[&edge.from].end, dest: self.blocks[&edge.to].start }
    }

    /// Every transfer some edge can produce.
    pub fn transfer_set(&self) -> HashSet<Transfer> {
        self.edges.iter().map(|e| self.transfer(e)).collect()
    }

    pub fn function_blocks(&self, function: usize) -> Vec<BlockId> {
        self.blocks.values().filter(|b| b.function == function).map(|b| b.id).collect()
    }

    /// Block of the same function with the smallest start above the call
    /// site's end, for blocks with an outgoing call edge.
    pub fn call_continuation(&self, id: BlockId) -> Option<BlockId> {
        if !self.out_edges(id).any(|e| e.kind == EdgeKind::Call) {
            return None;
        }
        let site = &self.blocks[&id];
        self.blocks
            .values()
            .filter(|b| b.function == site.function && b.start > site.end)
            .min_by_key(|b| b.start)
            .map(|b| b.id)
    }

    /// Successors inside the block's own function: non call/return edges
    /// staying in the function, plus the synthetic call-through edge.
    pub fn intra_successors(&self, id: BlockId) -> Vec<IntraEdge> {
        let f = self.blocks[&id].function;
        let mut succ: Vec<IntraEdge> = self
            .out_edges(id)
            .filter(|e| !e.kind.is_interprocedural() && self.blocks[&e.to].function == f)
            .map(|e| IntraEdge { from: id, to: e.to, synthetic: false })
            .collect();
        if let Some(c) = self.call_continuation(id) {
            if !succ.iter().any(|s| s.to == c) {
                succ.push(IntraEdge { from: id, to: c, synthetic: true });
            }
        }
        succ
    }

    /// Number of distinct real intra-function successors of each block of
    /// `function` that has at least two.
    pub fn branch_count(&self, function: usize) -> usize {
        self.function_blocks(function)
            .into_iter()
            .filter(|&b| self.intra_successors(b).iter().filter(|e| !e.synthetic).count() >= 2)
            .count()
    }

    /// Functions that are targets of at least one call edge.
    pub fn called_functions(&self) -> BTreeSet<usize> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Call).map(|e| self.blocks[&e.to].function).collect()
    }

    /// Immediate dominators of the blocks of `function` reachable from its
    /// entry in the intra-function view. The entry maps to itself.
    pub fn dominators(&self, function: usize) -> BTreeMap<BlockId, BlockId> {
        let entry = self.functions[function].entry;
        let rpo = self.reverse_postorder(entry);
        let order: HashMap<BlockId, usize> = rpo.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let mut preds: HashMap<BlockId, Vec<BlockId>> = HashMap::new();
        for &b in &rpo {
            for e in self.intra_successors(b) {
                preds.entry(e.to).or_default().push(b);
            }
        }
        let mut idom: HashMap<BlockId, BlockId> = HashMap::from([(entry, entry)]);
        let intersect = |idom: &HashMap<BlockId, BlockId>, mut a: BlockId, mut b: BlockId| {
            while a != b {
                while order[&a] > order[&b] {
                    a = idom[&a];
                }
                while order[&b] > order[&a] {
                    b = idom[&b];
                }
            }
            a
        };
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new = None;
                for &p in preds.get(&b).into_iter().flatten() {
                    if idom.contains_key(&p) {
                        new = Some(match new {
                            None => p,
                            Some(n) => intersect(&idom, p, n),
                        });
                    }
                }
                let new = new.expect("reachable block has a processed predecessor");
                if idom.get(&b) != Some(&new) {
                    idom.insert(b, new);
                    changed = true;
                }
            }
        }
        idom.into_iter().collect()
    }

    fn reverse_postorder(&self, entry: BlockId) -> Vec<BlockId> {
        let mut post = Vec::new();
        let mut visited = HashSet::from([entry]);
        let mut stack = vec![(entry, self.intra_successors(entry), 0usize)];
        while let Some((b, succ, i)) = stack.last_mut() {
            if let Some(e) = succ.get(*i) {
                *i += 1;
                let to = e.to;
                if visited.insert(to) {
                    stack.push((to, self.intra_successors(to), 0));
                }
            } else {
                post.push(*b);
                stack.pop();
            }
        }
        post.reverse();
        post
    }

    /// Retreating edges of a depth-first search over the intra-function
    /// view, started at each function entry and then at every unvisited
    /// block in id order. Removing them leaves the view acyclic.
    pub fn retreating_edges(&self) -> HashSet<(BlockId, BlockId)> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut mark: HashMap<BlockId, Mark> = HashMap::new();
        let mut back = HashSet::new();
        let roots = self.functions.iter().map(|f| f.entry).chain(self.blocks.keys().copied());
        for root in roots {
            if mark.contains_key(&root) {
                continue;
            }
            mark.insert(root, Mark::Open);
            let mut stack = vec![(root, self.intra_successors(root), 0usize)];
            while let Some((b, succ, i)) = stack.last_mut() {
                let b = *b;
                if let Some(e) = succ.get(*i).copied() {
                    *i += 1;
                    match mark.get(&e.to) {
                        None => {
                            mark.insert(e.to, Mark::Open);
                            stack.push((e.to, self.intra_successors(e.to), 0));
                        }
                        Some(Mark::Open) => {
                            back.insert((b, e.to));
                        }
                        Some(Mark::Done) => {}
                    }
                } else {
                    mark.insert(b, Mark::Done);
                    stack.pop();
                }
            }
        }
        back
    }
}

/// `a` dominates `b` under the immediate-dominator map `idom`.
pub fn dominates(idom: &BTreeMap<BlockId, BlockId>, a: BlockId, b: BlockId) -> bool {
    let mut x = b;
    loop {
        if x == a {
            return true;
        }
        match idom.get(&x) {
            Some(&p) if p != x => x = p,
            _ => return false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaturalLoop {
    pub function: usize,
    pub header: BlockId,
    pub blocks: BTreeSet<BlockId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoopInfo {
    pub loops: Vec<NaturalLoop>,
    /// Indices into `loops` for every block inside at least one loop.
    pub membership: BTreeMap<BlockId, BTreeSet<usize>>,
}

impl LoopInfo {
    pub fn loops_of(&self, block: BlockId) -> BTreeSet<usize> {
        self.membership.get(&block).cloned().unwrap_or_default()
    }

    pub fn in_loop(&self, block: BlockId) -> bool {
        self.membership.contains_key(&block)
    }

    pub fn is_header(&self, block: BlockId) -> bool {
        self.loops.iter().any(|l| l.header == block)
    }
}

/// Natural loops of back edges `t -> h` with `h` dominating `t`. Loops
/// sharing a header are merged.
pub fn find_loops(cfg: &Cfg) -> LoopInfo {
    let mut by_header: BTreeMap<BlockId, NaturalLoop> = BTreeMap::new();
    for function in 0..cfg.functions.len() {
        let idom = cfg.dominators(function);
        let mut preds: HashMap<BlockId, Vec<BlockId>> = HashMap::new();
        for &b in idom.keys() {
            for e in cfg.intra_successors(b) {
                preds.entry(e.to).or_default().push(b);
            }
        }
        for &t in idom.keys() {
            for e in cfg.intra_successors(t) {
                let h = e.to;
                if !dominates(&idom, h, t) {
                    continue;
                }
                let lp = by_header.entry(h).or_insert_with(|| NaturalLoop {
                    function,
                    header: h,
                    blocks: BTreeSet::from([h]),
                });
                let mut work = vec![t];
                while let Some(x) = work.pop() {
                    if lp.blocks.insert(x) {
                        work.extend(preds.get(&x).into_iter().flatten().copied());
                    }
                }
            }
        }
    }
    let loops: Vec<NaturalLoop> = by_header.into_values().collect();
    let mut membership: BTreeMap<BlockId, BTreeSet<usize>> = BTreeMap::new();
    for (i, l) in loops.iter().enumerate() {
        for &b in &l.blocks {
            membership.entry(b).or_default().insert(i);
        }
    }
    LoopInfo { loops, membership }
}
