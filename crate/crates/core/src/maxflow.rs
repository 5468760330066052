//! Boykov–Kolmogorov augmenting-path max-flow on integer capacities.
//!
//! Search trees grow from both terminals, are reused across augmentations,
//! and are repaired by adopting orphans. Arcs are stored in pairs so that
//! `a ^ 1` is the reverse arc of `a`.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;
const INF_DIST: u32 = u32::MAX;

#[inline]
fn sister(a: u32) -> u32 {
    a ^ 1
}

pub struct Graph {
    first: Vec<u32>,
    /// Positive: residual capacity from the source. Negative: to the sink.
    tr_cap: Vec<i64>,
    head: Vec<u32>,
    next: Vec<u32>,
    r_cap: Vec<i64>,
    flow: i64,

    parent: Vec<u32>,
    is_sink: Vec<bool>,
    ts: Vec<u32>,
    dist: Vec<u32>,
    queued: Vec<bool>,
    active: VecDeque<u32>,
    orphans: VecDeque<u32>,
    time: u32,
}

impl Graph {
    pub fn new(nodes: usize, arcs_hint: usize) -> Self {
        Graph {
            first: vec![NONE; nodes],
            tr_cap: vec![0; nodes],
            head: Vec::with_capacity(arcs_hint * 2),
            next: Vec::with_capacity(arcs_hint * 2),
            r_cap: Vec::with_capacity(arcs_hint * 2),
            flow: 0,
            parent: vec![NONE; nodes],
            is_sink: vec![false; nodes],
            ts: vec![0; nodes],
            dist: vec![0; nodes],
            queued: vec![false; nodes],
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.first.len()
    }

    /// Add terminal capacities `source -> i` and `i -> sink`.
    pub fn add_tweights(&mut self, i: usize, to_source: i64, to_sink: i64) {
        debug_assert!(to_source >= 0 && to_sink >= 0);
        let mut cs = to_source;
        let mut ct = to_sink;
        let delta = self.tr_cap[i];
        if delta > 0 {
            cs += delta;
        } else {
            ct -= delta;
        }
        self.flow += cs.min(ct);
        self.tr_cap[i] = cs - ct;
    }

    /// Add arc `i -> j` with capacity `cap` and `j -> i` with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: i64, rev_cap: i64) {
        debug_assert!(i != j && cap >= 0 && rev_cap >= 0);
        let a = self.head.len() as u32;
        self.head.push(j as u32);
        self.next.push(self.first[i]);
        self.r_cap.push(cap);
        self.first[i] = a;
        self.head.push(i as u32);
        self.next.push(self.first[j]);
        self.r_cap.push(rev_cap);
        self.first[j] = a + 1;
    }

    fn activate(&mut self, i: u32) {
        if !self.queued[i as usize] {
            self.queued[i as usize] = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<u32> {
        while let Some(i) = self.active.pop_front() {
            self.queued[i as usize] = false;
            if self.parent[i as usize] != NONE {
                return Some(i);
            }
        }
        None
    }

    fn set_orphan_front(&mut self, i: u32) {
        self.parent[i as usize] = ORPHAN;
        self.orphans.push_front(i);
    }

    fn set_orphan_back(&mut self, i: u32) {
        self.parent[i as usize] = ORPHAN;
        self.orphans.push_back(i);
    }

    /// Run to completion and return the max-flow value.
    pub fn maxflow(&mut self) -> i64 {
        for i in 0..self.node_count() {
            if self.tr_cap[i] != 0 {
                self.parent[i] = TERMINAL;
                self.is_sink[i] = self.tr_cap[i] < 0;
                self.ts[i] = 0;
                self.dist[i] = 1;
                self.activate(i as u32);
            } else {
                self.parent[i] = NONE;
            }
        }
        let mut current: Option<u32> = None;
        loop {
            let i = match current.take() {
                Some(i) if self.parent[i as usize] != NONE => i,
                _ => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            let middle = self.grow(i);
            self.time = self.time.wrapping_add(1);
            if let Some(a) = middle {
                current = Some(i);
                self.augment(a);
                while let Some(o) = self.orphans.pop_front() {
                    self.adopt(o);
                }
            }
        }
        self.flow
    }

    /// Expand the tree containing `i`; return an arc joining the two trees.
    fn grow(&mut self, i: u32) -> Option<u32> {
        let iu = i as usize;
        let sink_side = self.is_sink[iu];
        let mut a = self.first[iu];
        while a != NONE {
            let au = a as usize;
            let cap = if sink_side { self.r_cap[sister(a) as usize] } else { self.r_cap[au] };
            if cap > 0 {
                let j = self.head[au];
                let ju = j as usize;
                if self.parent[ju] == NONE {
                    self.is_sink[ju] = sink_side;
                    self.parent[ju] = sister(a);
                    self.ts[ju] = self.ts[iu];
                    self.dist[ju] = self.dist[iu] + 1;
                    self.activate(j);
                } else if self.is_sink[ju] != sink_side {
                    return Some(if sink_side { sister(a) } else { a });
                } else if self.ts[ju] <= self.ts[iu] && self.dist[ju] > self.dist[iu] {
                    self.parent[ju] = sister(a);
                    self.ts[ju] = self.ts[iu];
                    self.dist[ju] = self.dist[iu] + 1;
                }
            }
            a = self.next[au];
        }
        None
    }

    /// Push the bottleneck along the path through `middle` (source tree -> sink tree).
    fn augment(&mut self, middle: u32) {
        let mut bottleneck = self.r_cap[middle as usize];
        let mut i = self.head[sister(middle) as usize];
        loop {
            let p = self.parent[i as usize];
            if p == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.r_cap[sister(p) as usize]);
            i = self.head[p as usize];
        }
        bottleneck = bottleneck.min(self.tr_cap[i as usize]);
        let mut j = self.head[middle as usize];
        loop {
            let p = self.parent[j as usize];
            if p == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.r_cap[p as usize]);
            j = self.head[p as usize];
        }
        bottleneck = bottleneck.min(-self.tr_cap[j as usize]);

        self.r_cap[sister(middle) as usize] += bottleneck;
        self.r_cap[middle as usize] -= bottleneck;

        let mut i = self.head[sister(middle) as usize];
        loop {
            let p = self.parent[i as usize];
            if p == TERMINAL {
                self.tr_cap[i as usize] -= bottleneck;
                if self.tr_cap[i as usize] == 0 {
                    self.set_orphan_front(i);
                }
                break;
            }
            self.r_cap[p as usize] += bottleneck;
            self.r_cap[sister(p) as usize] -= bottleneck;
            if self.r_cap[sister(p) as usize] == 0 {
                self.set_orphan_front(i);
            }
            i = self.head[p as usize];
        }
        let mut j = self.head[middle as usize];
        loop {
            let p = self.parent[j as usize];
            if p == TERMINAL {
                self.tr_cap[j as usize] += bottleneck;
                if self.tr_cap[j as usize] == 0 {
                    self.set_orphan_front(j);
                }
                break;
            }
            self.r_cap[sister(p) as usize] += bottleneck;
            self.r_cap[p as usize] -= bottleneck;
            if self.r_cap[p as usize] == 0 {
                self.set_orphan_front(j);
            }
            j = self.head[p as usize];
        }
        self.flow += bottleneck;
    }

    /// Distance from `j` to its terminal through valid parents, or `INF_DIST`.
    fn origin_distance(&mut self, mut j: u32) -> u32 {
        let mut d: u32 = 0;
        loop {
            let ju = j as usize;
            if self.ts[ju] == self.time {
                return d.saturating_add(self.dist[ju]);
            }
            let a = self.parent[ju];
            d += 1;
            if a == TERMINAL {
                self.ts[ju] = self.time;
                self.dist[ju] = 1;
                return d;
            }
            if a == ORPHAN || a == NONE {
                return INF_DIST;
            }
            j = self.head[a as usize];
        }
    }

    fn adopt(&mut self, i: u32) {
        let iu = i as usize;
        let sink_side = self.is_sink[iu];
        let mut best_arc = NONE;
        let mut best_d = INF_DIST;
        let mut a0 = self.first[iu];
        while a0 != NONE {
            let cap = if sink_side { self.r_cap[a0 as usize] } else { self.r_cap[sister(a0) as usize] };
            let j = self.head[a0 as usize];
            let ju = j as usize;
            if cap > 0 && self.is_sink[ju] == sink_side && self.parent[ju] != NONE {
                let d = self.origin_distance(j);
                if d < INF_DIST {
                    if d < best_d {
                        best_arc = a0;
                        best_d = d;
                    }
                    // cache distances along the verified path
                    let mut k = j;
                    let mut dk = d;
                    while self.ts[k as usize] != self.time {
                        self.ts[k as usize] = self.time;
                        self.dist[k as usize] = dk;
                        dk -= 1;
                        k = self.head[self.parent[k as usize] as usize];
                    }
                }
            }
            a0 = self.next[a0 as usize];
        }
        if best_arc != NONE {
            self.parent[iu] = best_arc;
            self.ts[iu] = self.time;
            self.dist[iu] = best_d + 1;
            return;
        }
        self.ts[iu] = 0;
        let mut a0 = self.first[iu];
        while a0 != NONE {
            let j = self.head[a0 as usize];
            let ju = j as usize;
            let p = self.parent[ju];
            if self.is_sink[ju] == sink_side && p != NONE {
                let cap = if sink_side { self.r_cap[a0 as usize] } else { self.r_cap[sister(a0) as usize] };
                if cap > 0 {
                    self.activate(j);
                }
                if p != TERMINAL && p != ORPHAN && self.head[p as usize] == i {
                    self.set_orphan_back(j);
                }
            }
            a0 = self.next[a0 as usize];
        }
        self.parent[iu] = NONE;
    }

    /// True when `i` ends on the source side of the minimum cut. Nodes not
    /// reachable from the source are reported on the sink side.
    pub fn in_source_segment(&self, i: usize) -> bool {
        self.parent[i] != NONE && !self.is_sink[i]
    }
}
