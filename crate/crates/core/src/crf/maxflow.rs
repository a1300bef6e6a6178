//! Boykov–Kolmogorov max-flow.
//!
//! Two search trees grow from the terminals; when they touch, the path is
//! augmented and the nodes cut off from their tree (orphans) look for a new
//! parent before growth resumes. Trees are kept between augmentations, which
//! is what makes the method fast on grid graphs with short augmenting paths.
//!
//! Terminal links are folded into one signed residual per node: positive is
//! spare source→node capacity, negative is spare node→sink capacity.

use std::collections::VecDeque;

type NodeId = usize;
type ArcId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parent {
    None,
    Terminal,
    Orphan,
    /// Arc from this node toward its parent.
    Arc(ArcId),
}

#[derive(Debug, Clone)]
struct Node {
    first: Option<ArcId>,
    parent: Parent,
    in_sink_tree: bool,
    active: bool,
    tr_cap: f64,
    ts: u64,
    dist: u32,
}

#[derive(Debug, Clone)]
struct Arc {
    head: NodeId,
    next: Option<ArcId>,
    r_cap: f64,
}

#[inline]
fn sister(a: ArcId) -> ArcId {
    a ^ 1
}

/// Directed graph with two implicit terminals.
#[derive(Debug, Clone, Default)]
pub struct MaxFlowGraph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    active: VecDeque<NodeId>,
    orphans: VecDeque<NodeId>,
    time: u64,
    solved: bool,
}

/// Which side of the minimum cut a node ended on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Source,
    Sink,
}

impl MaxFlowGraph {
    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        MaxFlowGraph {
            nodes: Vec::with_capacity(nodes),
            arcs: Vec::with_capacity(2 * edges),
            ..Default::default()
        }
    }

    pub fn add_nodes(&mut self, n: usize) -> NodeId {
        let first = self.nodes.len();
        self.nodes.extend((0..n).map(|_| Node {
            first: None,
            parent: Parent::None,
            in_sink_tree: false,
            active: false,
            tr_cap: 0.0,
            ts: 0,
            dist: 0,
        }));
        first
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Add terminal capacities; the shared part is pushed as flow immediately.
    pub fn add_tweights(&mut self, i: NodeId, cap_source: f64, cap_sink: f64) {
        let node = &mut self.nodes[i];
        let (mut cs, mut ct) = (cap_source, cap_sink);
        if node.tr_cap > 0.0 {
            cs += node.tr_cap;
        } else {
            ct -= node.tr_cap;
        }
        self.flow += cs.min(ct);
        node.tr_cap = cs - ct;
    }

    /// Edge `i → j` with capacity `cap` and reverse capacity `rev_cap`.
    pub fn add_edge(&mut self, i: NodeId, j: NodeId, cap: f64, rev_cap: f64) {
        debug_assert!(i != j);
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: j,
            next: self.nodes[i].first,
            r_cap: cap,
        });
        self.arcs.push(Arc {
            head: i,
            next: self.nodes[j].first,
            r_cap: rev_cap,
        });
        self.nodes[i].first = Some(a);
        self.nodes[j].first = Some(a + 1);
    }

    pub fn flow(&self) -> f64 {
        self.flow
    }

    /// Side of the cut after [`maxflow`](Self::maxflow). Nodes in neither
    /// tree are on the sink side.
    pub fn segment(&self, i: NodeId) -> Segment {
        let n = &self.nodes[i];
        if n.parent != Parent::None && !n.in_sink_tree {
            Segment::Source
        } else {
            Segment::Sink
        }
    }

    #[cfg(test)]
    fn arcs_of(&self, i: NodeId) -> ArcIter<'_> {
        ArcIter {
            arcs: &self.arcs,
            cur: self.nodes[i].first,
        }
    }

    fn set_active(&mut self, i: NodeId) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<NodeId> {
        while let Some(i) = self.active.pop_front() {
            self.nodes[i].active = false;
            if self.nodes[i].parent != Parent::None {
                return Some(i);
            }
        }
        None
    }

    pub fn maxflow(&mut self) -> f64 {
        if self.solved {
            return self.flow;
        }
        self.solved = true;
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            if n.tr_cap != 0.0 {
                n.in_sink_tree = n.tr_cap < 0.0;
                n.parent = Parent::Terminal;
                n.ts = 0;
                n.dist = 1;
                self.set_active(i);
            }
        }

        let mut current: Option<NodeId> = None;
        loop {
            let i = match current.take() {
                Some(c) => {
                    self.nodes[c].active = false;
                    if self.nodes[c].parent == Parent::None {
                        match self.next_active() {
                            Some(i) => i,
                            None => break,
                        }
                    } else {
                        c
                    }
                }
                None => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };

            let meeting = self.grow(i);
            self.time += 1;
            if let Some(a) = meeting {
                // keep growing from i next round without requeueing it
                self.nodes[i].active = true;
                current = Some(i);
                self.augment(a);
                self.adopt_orphans();
            }
        }
        self.flow
    }

    /// Grow the tree containing `i`; returns an arc from a source-tree node
    /// to a sink-tree node when the trees meet.
    fn grow(&mut self, i: NodeId) -> Option<ArcId> {
        let in_sink = self.nodes[i].in_sink_tree;
        let mut a_opt = self.nodes[i].first;
        while let Some(a) = a_opt {
            a_opt = self.arcs[a].next;
            // residual in the tree's growth direction
            let cap = if in_sink {
                self.arcs[sister(a)].r_cap
            } else {
                self.arcs[a].r_cap
            };
            if cap <= 0.0 {
                continue;
            }
            let j = self.arcs[a].head;
            if self.nodes[j].parent == Parent::None {
                let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
                let nj = &mut self.nodes[j];
                nj.in_sink_tree = in_sink;
                nj.parent = Parent::Arc(sister(a));
                nj.ts = ts;
                nj.dist = dist + 1;
                self.set_active(j);
            } else if self.nodes[j].in_sink_tree != in_sink {
                return Some(if in_sink { sister(a) } else { a });
            } else if self.nodes[j].ts <= self.nodes[i].ts && self.nodes[j].dist > self.nodes[i].dist {
                // shorten j's path to the terminal
                let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
                let nj = &mut self.nodes[j];
                nj.parent = Parent::Arc(sister(a));
                nj.ts = ts;
                nj.dist = dist + 1;
            }
        }
        None
    }

    fn augment(&mut self, middle: ArcId) {
        let mut bottleneck = self.arcs[middle].r_cap;
        // source side: walk from the middle arc's tail up to the source
        let mut i = self.arcs[sister(middle)].head;
        loop {
            match self.nodes[i].parent {
                Parent::Terminal => break,
                Parent::Arc(a) => {
                    bottleneck = bottleneck.min(self.arcs[sister(a)].r_cap);
                    i = self.arcs[a].head;
                }
                p => unreachable!("source path broken at {i}: {p:?}"),
            }
        }
        bottleneck = bottleneck.min(self.nodes[i].tr_cap);
        // sink side
        let mut i = self.arcs[middle].head;
        loop {
            match self.nodes[i].parent {
                Parent::Terminal => break,
                Parent::Arc(a) => {
                    bottleneck = bottleneck.min(self.arcs[a].r_cap);
                    i = self.arcs[a].head;
                }
                p => unreachable!("sink path broken at {i}: {p:?}"),
            }
        }
        bottleneck = bottleneck.min(-self.nodes[i].tr_cap);

        self.arcs[sister(middle)].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        let mut i = self.arcs[sister(middle)].head;
        loop {
            match self.nodes[i].parent {
                Parent::Terminal => {
                    self.nodes[i].tr_cap -= bottleneck;
                    if self.nodes[i].tr_cap <= 0.0 {
                        self.nodes[i].tr_cap = 0.0;
                        self.make_orphan_front(i);
                    }
                    break;
                }
                Parent::Arc(a) => {
                    self.arcs[a].r_cap += bottleneck;
                    self.arcs[sister(a)].r_cap -= bottleneck;
                    let next = self.arcs[a].head;
                    if self.arcs[sister(a)].r_cap <= 0.0 {
                        self.arcs[sister(a)].r_cap = 0.0;
                        self.make_orphan_front(i);
                    }
                    i = next;
                }
                _ => unreachable!(),
            }
        }
        let mut i = self.arcs[middle].head;
        loop {
            match self.nodes[i].parent {
                Parent::Terminal => {
                    self.nodes[i].tr_cap += bottleneck;
                    if self.nodes[i].tr_cap >= 0.0 {
                        self.nodes[i].tr_cap = 0.0;
                        self.make_orphan_front(i);
                    }
                    break;
                }
                Parent::Arc(a) => {
                    self.arcs[sister(a)].r_cap += bottleneck;
                    self.arcs[a].r_cap -= bottleneck;
                    let next = self.arcs[a].head;
                    if self.arcs[a].r_cap <= 0.0 {
                        self.arcs[a].r_cap = 0.0;
                        self.make_orphan_front(i);
                    }
                    i = next;
                }
                _ => unreachable!(),
            }
        }
        self.flow += bottleneck;
    }

    fn make_orphan_front(&mut self, i: NodeId) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_front(i);
    }

    fn make_orphan_back(&mut self, i: NodeId) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_back(i);
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.process_orphan(i);
        }
    }

    /// Distance to the terminal through `j`'s current tree path, or `None`
    /// when the path runs into an orphan. Marks visited nodes with the current time.
    fn origin_distance(&mut self, start: NodeId) -> Option<u32> {
        let mut j = start;
        let mut d: u32 = 0;
        loop {
            if self.nodes[j].ts == self.time {
                d += self.nodes[j].dist;
                break;
            }
            d += 1;
            match self.nodes[j].parent {
                Parent::Terminal => {
                    self.nodes[j].ts = self.time;
                    self.nodes[j].dist = 1;
                    break;
                }
                Parent::Arc(a) => j = self.arcs[a].head,
                Parent::Orphan | Parent::None => return None,
            }
        }
        // cache distances along the walked path
        let mut j = start;
        let mut dd = d;
        while self.nodes[j].ts != self.time {
            self.nodes[j].ts = self.time;
            self.nodes[j].dist = dd;
            dd -= 1;
            match self.nodes[j].parent {
                Parent::Arc(a) => j = self.arcs[a].head,
                _ => break,
            }
        }
        Some(d)
    }

    fn process_orphan(&mut self, i: NodeId) {
        let in_sink = self.nodes[i].in_sink_tree;
        let mut best: Option<(ArcId, u32)> = None;

        let mut a_opt = self.nodes[i].first;
        while let Some(a0) = a_opt {
            a_opt = self.arcs[a0].next;
            // residual from the candidate parent j toward i, in tree direction
            let cap = if in_sink {
                self.arcs[a0].r_cap
            } else {
                self.arcs[sister(a0)].r_cap
            };
            if cap <= 0.0 {
                continue;
            }
            let j = self.arcs[a0].head;
            if self.nodes[j].in_sink_tree != in_sink || self.nodes[j].parent == Parent::None {
                continue;
            }
            if let Some(d) = self.origin_distance(j) {
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((a0, d));
                }
            }
        }

        if let Some((a0, d)) = best {
            let n = &mut self.nodes[i];
            n.parent = Parent::Arc(a0);
            n.ts = self.time;
            n.dist = d + 1;
            return;
        }

        self.nodes[i].parent = Parent::None;
        let mut a_opt = self.nodes[i].first;
        while let Some(a0) = a_opt {
            a_opt = self.arcs[a0].next;
            let j = self.arcs[a0].head;
            let nj = &self.nodes[j];
            if nj.in_sink_tree != in_sink || nj.parent == Parent::None {
                continue;
            }
            let cap = if in_sink {
                self.arcs[a0].r_cap
            } else {
                self.arcs[sister(a0)].r_cap
            };
            if cap > 0.0 {
                self.set_active(j);
            }
            if let Parent::Arc(pa) = self.nodes[j].parent {
                if self.arcs[pa].head == i {
                    self.make_orphan_back(j);
                }
            }
        }
    }

    /// Residual graph check used by tests: no residual path from the source
    /// side to the sink side.
    #[cfg(test)]
    pub(crate) fn cut_is_saturated(&self) -> bool {
        for i in 0..self.nodes.len() {
            let si = self.segment(i);
            if si == Segment::Source && self.nodes[i].tr_cap < 0.0 {
                return false;
            }
            if si == Segment::Sink && self.nodes[i].tr_cap > 0.0 {
                return false;
            }
            for a in self.arcs_of(i) {
                let j = self.arcs[a].head;
                if si == Segment::Source && self.segment(j) == Segment::Sink && self.arcs[a].r_cap > 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
struct ArcIter<'a> {
    arcs: &'a [Arc],
    cur: Option<ArcId>,
}

#[cfg(test)]
impl Iterator for ArcIter<'_> {
    type Item = ArcId;
    fn next(&mut self) -> Option<ArcId> {
        let a = self.cur?;
        self.cur = self.arcs[a].next;
        Some(a)
    }
}
