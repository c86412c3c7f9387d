//! Exact minimization of submodular binary pairwise energies by min-cut.
//!
//! An energy assigns a cost `a_p` to every node labelled 1 and a Potts cost
//! `w_pq >= 0` to every neighbour pair with differing labels. It is reduced to
//! an s-t network (source side = label 0, sink side = label 1) and solved with
//! a Boykov-Kolmogorov style augmenting-path search that grows two search
//! trees and reuses them between augmentations.
//!
//! Co-optimal cuts are broken by reachability: after the flow is maximal, a
//! node is labelled 0 exactly when it is reachable from the source in the
//! residual graph.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Residual capacities at or below this value count as saturated.
pub const CAPACITY_EPS: f64 = 1e-12;

/// Binary pairwise energy `Σ a_p y_p + Σ_{p<q} w_pq |y_p - y_q|`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinaryEnergy {
    unary: Vec<f64>,
    /// `(p, q, w)` with `p < q`; duplicates accumulate.
    pairwise: Vec<(usize, usize, f64)>,
}

impl BinaryEnergy {
    pub fn new(node_count: usize) -> Self {
        BinaryEnergy {
            unary: vec![0.0; node_count],
            pairwise: Vec::new(),
        }
    }

    pub fn from_unary(unary: Vec<f64>) -> Self {
        BinaryEnergy {
            unary,
            pairwise: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.unary.len()
    }

    pub fn unary(&self) -> &[f64] {
        &self.unary
    }

    pub fn pairwise(&self) -> &[(usize, usize, f64)] {
        &self.pairwise
    }

    pub fn set_unary(&mut self, p: usize, cost: f64) -> Result<()> {
        let n = self.unary.len();
        let slot = self
            .unary
            .get_mut(p)
            .ok_or(Error::InvalidEdge { p, q: p, nodes: n })?;
        *slot = cost;
        Ok(())
    }

    /// Adds a Potts term. Negative weights are accepted here and rejected by
    /// [`build_network`], which is where submodularity matters.
    pub fn add_pairwise(&mut self, p: usize, q: usize, weight: f64) -> Result<()> {
        let n = self.unary.len();
        if p == q || p >= n || q >= n {
            return Err(Error::InvalidEdge { p, q, nodes: n });
        }
        self.pairwise.push((p.min(q), p.max(q), weight));
        Ok(())
    }

    /// Parses the plain-text listing used by `solve-energy`:
    ///
    /// ```text
    /// 3
    /// u 0 -1.5
    /// e 0 1 2.0
    /// ```
    ///
    /// Blank lines and `#` comments are ignored. Unlisted unaries are zero.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("missing node-count header".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::Format(format!("bad node count `{header}`")))?;
        let mut energy = BinaryEnergy::new(n);
        for (lineno, line) in lines {
            let bad = || Error::Format(format!("line {}: cannot parse `{line}`", lineno + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                ["u", p, a] => {
                    let p: usize = p.parse().map_err(|_| bad())?;
                    let a: f64 = a.parse().map_err(|_| bad())?;
                    energy.set_unary(p, a)?;
                }
                ["e", p, q, w] => {
                    let p: usize = p.parse().map_err(|_| bad())?;
                    let q: usize = q.parse().map_err(|_| bad())?;
                    let w: f64 = w.parse().map_err(|_| bad())?;
                    energy.add_pairwise(p, q, w)?;
                }
                _ => return Err(bad()),
            }
        }
        Ok(energy)
    }

    pub fn minimize(&self) -> Result<MinCut> {
        Ok(min_cut(&build_network(self)?))
    }
}

/// Evaluates the energy of a 0/1 labeling.
pub fn energy_value(e: &BinaryEnergy, labeling: &[u8]) -> Result<f64> {
    if labeling.len() != e.node_count() {
        return Err(Error::dim("energy_value", e.node_count(), labeling.len()));
    }
    let unary: f64 = e
        .unary
        .iter()
        .zip(labeling)
        .filter(|(_, &y)| y != 0)
        .map(|(a, _)| a)
        .sum();
    let pairwise: f64 = e
        .pairwise
        .iter()
        .filter(|&&(p, q, _)| (labeling[p] != 0) != (labeling[q] != 0))
        .map(|&(_, _, w)| w)
        .sum();
    Ok(unary + pairwise)
}

/// s-t network with per-node terminal capacities and bidirectional edges.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub node_count: usize,
    /// `(source -> p, p -> sink)` capacities.
    pub terminal_capacities: Vec<(f64, f64)>,
    /// `(p, q, cap p->q, cap q->p)`.
    pub edges: Vec<(usize, usize, f64, f64)>,
    /// Min-cut value minus minimum energy.
    pub offset: f64,
}

/// Reduces a submodular energy to a flow network.
pub fn build_network(e: &BinaryEnergy) -> Result<FlowNetwork> {
    let n = e.node_count();
    let mut offset = 0.0;
    let terminal_capacities = e
        .unary
        .iter()
        .map(|&a| {
            if a >= 0.0 {
                (a, 0.0)
            } else {
                offset -= a;
                (0.0, -a)
            }
        })
        .collect();
    let mut edges = Vec::with_capacity(e.pairwise.len());
    for &(p, q, w) in &e.pairwise {
        if p == q || p >= n || q >= n {
            return Err(Error::InvalidEdge { p, q, nodes: n });
        }
        if !(w >= 0.0) {
            return Err(Error::Submodularity { p, q, weight: w });
        }
        edges.push((p, q, w, w));
    }
    Ok(FlowNetwork {
        node_count: n,
        terminal_capacities,
        edges,
        offset,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    /// 0 = source side, 1 = sink side.
    pub labels: Vec<u8>,
    pub flow: f64,
}

/// Computes a maximum flow and decodes the minimum cut.
pub fn min_cut(network: &FlowNetwork) -> MinCut {
    let mut g = Graph::new(network);
    g.maxflow();
    let labels = g.source_reachability();
    MinCut {
        labels,
        flow: g.flow,
    }
}

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;
const INFINITE_D: u32 = u32::MAX;

#[inline]
fn sister(a: usize) -> usize {
    a ^ 1
}

#[inline]
fn zeroed(x: f64) -> f64 {
    if x.abs() <= CAPACITY_EPS {
        0.0
    } else {
        x
    }
}

struct Graph {
    // node arrays
    first: Vec<usize>,
    parent: Vec<usize>,
    in_sink: Vec<bool>,
    /// > 0: residual source capacity, < 0: residual sink capacity.
    tr_cap: Vec<f64>,
    ts: Vec<u64>,
    dist: Vec<u32>,
    is_active: Vec<bool>,
    // arc arrays; arcs 2k and 2k+1 are sisters
    head: Vec<usize>,
    next: Vec<usize>,
    r_cap: Vec<f64>,

    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
    time: u64,
    flow: f64,
}

impl Graph {
    fn new(net: &FlowNetwork) -> Self {
        let n = net.node_count;
        let m = net.edges.len() * 2;
        let mut g = Graph {
            first: vec![NONE; n],
            parent: vec![NONE; n],
            in_sink: vec![false; n],
            tr_cap: vec![0.0; n],
            ts: vec![0; n],
            dist: vec![0; n],
            is_active: vec![false; n],
            head: Vec::with_capacity(m),
            next: Vec::with_capacity(m),
            r_cap: Vec::with_capacity(m),
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
            flow: 0.0,
        };
        for &(p, q, cap, rev_cap) in &net.edges {
            // arc p->q
            let a = g.head.len();
            g.head.push(q);
            g.next.push(g.first[p]);
            g.r_cap.push(zeroed(cap));
            g.first[p] = a;
            // arc q->p
            g.head.push(p);
            g.next.push(g.first[q]);
            g.r_cap.push(zeroed(rev_cap));
            g.first[q] = a + 1;
        }
        for (i, &(cs, ct)) in net.terminal_capacities.iter().enumerate() {
            let (cs, ct) = (zeroed(cs), zeroed(ct));
            g.flow += cs.min(ct);
            let delta = zeroed(cs - ct);
            g.tr_cap[i] = delta;
            if delta > 0.0 {
                g.in_sink[i] = false;
                g.parent[i] = TERMINAL;
                g.dist[i] = 1;
                g.set_active(i);
            } else if delta < 0.0 {
                g.in_sink[i] = true;
                g.parent[i] = TERMINAL;
                g.dist[i] = 1;
                g.set_active(i);
            }
        }
        g
    }

    fn set_active(&mut self, i: usize) {
        if !self.is_active[i] {
            self.is_active[i] = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            self.is_active[i] = false;
            if self.parent[i] != NONE {
                return Some(i);
            }
        }
        None
    }

    fn arcs(&self, i: usize) -> ArcIter<'_> {
        ArcIter {
            next: &self.next,
            cur: self.first[i],
        }
    }

    fn maxflow(&mut self) {
        let mut current: Option<usize> = None;
        loop {
            let i = match current.filter(|&i| self.parent[i] != NONE) {
                Some(i) => i,
                None => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            current = None;

            let mut bridge = NONE;
            if !self.in_sink[i] {
                // grow source tree
                let mut a = self.first[i];
                while a != NONE {
                    if self.r_cap[a] > 0.0 {
                        let j = self.head[a];
                        if self.parent[j] == NONE {
                            self.in_sink[j] = false;
                            self.parent[j] = sister(a);
                            self.ts[j] = self.ts[i];
                            self.dist[j] = self.dist[i] + 1;
                            self.set_active(j);
                        } else if self.in_sink[j] {
                            bridge = a;
                            break;
                        } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                            self.parent[j] = sister(a);
                            self.ts[j] = self.ts[i];
                            self.dist[j] = self.dist[i] + 1;
                        }
                    }
                    a = self.next[a];
                }
            } else {
                // grow sink tree
                let mut a = self.first[i];
                while a != NONE {
                    if self.r_cap[sister(a)] > 0.0 {
                        let j = self.head[a];
                        if self.parent[j] == NONE {
                            self.in_sink[j] = true;
                            self.parent[j] = sister(a);
                            self.ts[j] = self.ts[i];
                            self.dist[j] = self.dist[i] + 1;
                            self.set_active(j);
                        } else if !self.in_sink[j] {
                            bridge = sister(a);
                            break;
                        } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                            self.parent[j] = sister(a);
                            self.ts[j] = self.ts[i];
                            self.dist[j] = self.dist[i] + 1;
                        }
                    }
                    a = self.next[a];
                }
            }

            self.time += 1;
            if bridge != NONE {
                // keep expanding from i once the trees are repaired
                current = Some(i);
                self.augment(bridge);
                while let Some(o) = self.orphans.pop_front() {
                    if self.in_sink[o] {
                        self.adopt_sink_orphan(o);
                    } else {
                        self.adopt_source_orphan(o);
                    }
                }
            }
        }
    }

    /// Pushes the bottleneck along source -> ... -> tail(bridge) -> head(bridge) -> ... -> sink.
    fn augment(&mut self, bridge: usize) {
        let mut bottleneck = self.r_cap[bridge];
        // source half
        let mut i = self.head[sister(bridge)];
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.r_cap[sister(a)]);
            i = self.head[a];
        }
        bottleneck = bottleneck.min(self.tr_cap[i]);
        // sink half
        let mut i = self.head[bridge];
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.r_cap[a]);
            i = self.head[a];
        }
        bottleneck = bottleneck.min(-self.tr_cap[i]);

        self.r_cap[sister(bridge)] += bottleneck;
        self.r_cap[bridge] = zeroed(self.r_cap[bridge] - bottleneck);

        let mut i = self.head[sister(bridge)];
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            self.r_cap[a] += bottleneck;
            let s = sister(a);
            self.r_cap[s] = zeroed(self.r_cap[s] - bottleneck);
            if self.r_cap[s] == 0.0 {
                self.make_orphan(i);
            }
            i = self.head[a];
        }
        self.tr_cap[i] = zeroed(self.tr_cap[i] - bottleneck);
        if self.tr_cap[i] == 0.0 {
            self.make_orphan(i);
        }

        let mut i = self.head[bridge];
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            self.r_cap[sister(a)] += bottleneck;
            self.r_cap[a] = zeroed(self.r_cap[a] - bottleneck);
            if self.r_cap[a] == 0.0 {
                self.make_orphan(i);
            }
            i = self.head[a];
        }
        self.tr_cap[i] = zeroed(self.tr_cap[i] + bottleneck);
        if self.tr_cap[i] == 0.0 {
            self.make_orphan(i);
        }

        self.flow += bottleneck;
    }

    fn make_orphan(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_back(i);
    }

    /// Distance from `j` to its terminal, or `None` if the path hits an orphan.
    fn origin_distance(&mut self, j: usize) -> Option<u32> {
        let mut d = 0u32;
        let mut k = j;
        loop {
            if self.ts[k] == self.time {
                d += self.dist[k];
                break;
            }
            let a = self.parent[k];
            d += 1;
            if a == TERMINAL {
                self.ts[k] = self.time;
                self.dist[k] = 1;
                break;
            }
            if a == ORPHAN || a == NONE {
                return None;
            }
            k = self.head[a];
        }
        // stamp the path so later searches stop early
        let mut k = j;
        let mut dd = d;
        while self.ts[k] != self.time {
            self.ts[k] = self.time;
            self.dist[k] = dd;
            dd -= 1;
            k = self.head[self.parent[k]];
        }
        Some(d)
    }

    fn adopt_source_orphan(&mut self, i: usize) {
        self.adopt(i, false);
    }

    fn adopt_sink_orphan(&mut self, i: usize) {
        self.adopt(i, true);
    }

    fn adopt(&mut self, i: usize, sink_side: bool) {
        let mut best_arc = NONE;
        let mut best_d = INFINITE_D;
        let arcs: Vec<usize> = self.arcs(i).collect();
        for &a0 in &arcs {
            // residual capacity into i (source tree) or out of i (sink tree)
            let cap = if sink_side {
                self.r_cap[a0]
            } else {
                self.r_cap[sister(a0)]
            };
            if cap <= 0.0 {
                continue;
            }
            let j = self.head[a0];
            if self.in_sink[j] != sink_side || self.parent[j] == NONE {
                continue;
            }
            if let Some(d) = self.origin_distance(j) {
                if d < best_d {
                    best_arc = a0;
                    best_d = d;
                }
            }
        }

        if best_arc != NONE {
            self.parent[i] = best_arc;
            self.ts[i] = self.time;
            self.dist[i] = best_d + 1;
            return;
        }

        // no parent found: i becomes free, its children become orphans
        self.ts[i] = 0;
        for &a0 in &arcs {
            let j = self.head[a0];
            if self.in_sink[j] != sink_side {
                continue;
            }
            let pj = self.parent[j];
            if pj == NONE {
                continue;
            }
            let cap = if sink_side {
                self.r_cap[a0]
            } else {
                self.r_cap[sister(a0)]
            };
            if cap > 0.0 {
                self.set_active(j);
            }
            if pj != TERMINAL && pj != ORPHAN && self.head[pj] == i {
                self.make_orphan(j);
            }
        }
        self.parent[i] = NONE;
    }

    /// Label 0 for nodes reachable from the source in the residual graph.
    fn source_reachability(&self) -> Vec<u8> {
        let n = self.first.len();
        let mut labels = vec![1u8; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for i in 0..n {
            if self.tr_cap[i] > CAPACITY_EPS {
                labels[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(u) = queue.pop_front() {
            for a in self.arcs(u) {
                let v = self.head[a];
                if labels[v] == 1 && self.r_cap[a] > CAPACITY_EPS {
                    labels[v] = 0;
                    queue.push_back(v);
                }
            }
        }
        labels
    }
}

struct ArcIter<'a> {
    next: &'a [usize],
    cur: usize,
}

impl Iterator for ArcIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.cur == NONE {
            return None;
        }
        let a = self.cur;
        self.cur = self.next[a];
        Some(a)
    }
}
