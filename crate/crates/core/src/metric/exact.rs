//! Exact distances for `xi = 0`.
//!
//! A path pays only for its length outside `S`, so it is charged nothing
//! while it stays inside one cluster. Any continuous path from `x` to `y`
//! that visits clusters `C_1, …, C_k` (in order of first entry after leaving
//! the previous one) therefore pays at least
//! `gap(x, C_1) + gap(C_1, C_2) + … + gap(C_k, y)`, where `gap` is the
//! Euclidean distance between the sets. Conversely that sum is attained: join
//! the closest pair of balls of consecutive clusters by the straight segment
//! between their centers; its free part has exactly the gap as length, and
//! inside a cluster the path hops from center to center through overlapping
//! balls at zero cost. The distance is thus the shortest path in the graph
//! whose nodes are `x`, `y` and the clusters, which is what [`Search`]
//! computes. Edge weights between clusters are found ball by ball, so the
//! cluster graph is never built.

use std::collections::{BinaryHeap, HashMap};
use std::sync::OnceLock;
use std::f64::consts::TAU;

use super::{DistanceResult, HeapItem};
use crate::clusters::ClusterSet;
use crate::error::{Error, Result};
use crate::model::{check_dim, dist, Point};

#[derive(Debug, Clone)]
pub(crate) enum Target {
    Point(Vec<f64>),
    Hyperplane { axis: usize, level: f64 },
}

impl Target {
    fn gap_point(&self, p: &[f64]) -> f64 {
        match self {
            Target::Point(y) => dist(p, y),
            Target::Hyperplane { axis, level } => (p[*axis] - level).abs(),
        }
    }

    fn gap_ball(&self, c: &[f64], r: f64) -> f64 {
        (self.gap_point(c) - r).max(0.0)
    }

    /// Point of `B(c, r)` nearest to the target.
    fn exit_point(&self, c: &[f64], r: f64) -> Vec<f64> {
        match self {
            Target::Point(y) => {
                let g = dist(c, y);
                if g <= r {
                    y.clone()
                } else {
                    toward(c, y, r)
                }
            }
            Target::Hyperplane { axis, level } => {
                let mut p = c.to_vec();
                let g = level - c[*axis];
                p[*axis] += g.signum() * g.abs().min(r);
                p
            }
        }
    }

    /// Where a free segment leaving `p` meets the target.
    fn landing(&self, p: &[f64]) -> Vec<f64> {
        match self {
            Target::Point(y) => y.clone(),
            Target::Hyperplane { axis, level } => {
                let mut q = p.to_vec();
                q[*axis] = *level;
                q
            }
        }
    }
}

/// `c + r · unit(p - c)`.
fn toward(c: &[f64], p: &[f64], r: f64) -> Vec<f64> {
    let n = dist(c, p);
    c.iter().zip(p).map(|(a, b)| a + r * (b - a) / n).collect()
}

/// How a node was reached.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Via {
    /// The source lies inside this cluster.
    Start,
    /// Free segment from the source point.
    Source,
    /// Free segment from this ball of an earlier cluster.
    Ball(u32),
}

pub(crate) struct Search<'a> {
    cs: &'a ClusterSet,
    source: &'a [f64],
    targets: Vec<Target>,
    cluster_dist: Vec<f64>,
    cluster_via: Vec<Via>,
    cluster_entry: Vec<u32>,
    settled: Vec<bool>,
    target_dist: Vec<f64>,
    target_via: Vec<Via>,
    target_final: Vec<bool>,
    pending: usize,
    heap: BinaryHeap<HeapItem>,
    cache: Option<&'a NeighborCache>,
}

/// One hop of a reconstructed route: the cluster, the ball where the route
/// enters it and the ball it leaves from.
#[derive(Debug, Clone, Copy)]
struct Hop {
    entry: u32,
    exit: u32,
    via: Via,
}

impl<'a> Search<'a> {
    pub(crate) fn run(cs: &'a ClusterSet, source: &'a [f64], targets: Vec<Target>) -> Self {
        Self::run_with(cs, source, targets, None)
    }

    pub(crate) fn run_with(
        cs: &'a ClusterSet,
        source: &'a [f64],
        targets: Vec<Target>,
        cache: Option<&'a NeighborCache>,
    ) -> Self {
        let nc = cs.len();
        let nt = targets.len();
        let mut s = Search {
            cs,
            source,
            targets,
            cluster_dist: vec![f64::INFINITY; nc],
            cluster_via: vec![Via::Source; nc],
            cluster_entry: vec![0; nc],
            settled: vec![false; nc],
            target_dist: vec![f64::INFINITY; nt],
            target_via: vec![Via::Source; nt],
            target_final: vec![false; nt],
            pending: nt,
            heap: BinaryHeap::new(),
            cache,
        };
        if nt == 0 {
            return s;
        }
        match cs.balls_containing(source).first() {
            Some(&b) => {
                let c = cs.cluster_of(b);
                s.cluster_dist[c] = 0.0;
                s.cluster_via[c] = Via::Start;
                s.cluster_entry[c] = b as u32;
                s.heap.push(HeapItem { key: 0.0, node: c as u32 });
            }
            None => {
                for t in 0..nt {
                    let w = s.targets[t].gap_point(source);
                    s.relax_target(t, w, Via::Source);
                }
                s.expand(source, 0.0, 0.0, Via::Source, None);
            }
        }
        s.main_loop();
        s
    }

    fn incumbent(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for t in 0..self.targets.len() {
            if !self.target_final[t] {
                m = m.max(self.target_dist[t]);
            }
        }
        m
    }

    fn relax_target(&mut self, t: usize, d: f64, via: Via) {
        if !self.target_final[t] && d < self.target_dist[t] {
            self.target_dist[t] = d;
            self.target_via[t] = via;
            let nc = self.cs.len() as u32;
            self.heap.push(HeapItem { key: d, node: nc + t as u32 });
        }
    }

    fn main_loop(&mut self) {
        let nc = self.cs.len();
        let r = self.cs.radius();
        while let Some(HeapItem { key, node }) = self.heap.pop() {
            let node = node as usize;
            if node >= nc {
                let t = node - nc;
                if self.target_final[t] || key > self.target_dist[t] {
                    continue;
                }
                self.target_final[t] = true;
                self.pending -= 1;
                if self.pending == 0 {
                    return;
                }
                continue;
            }
            if self.settled[node] || key > self.cluster_dist[node] {
                continue;
            }
            self.settled[node] = true;
            let cs = self.cs;
            for &b in cs.members(node) {
                let c = cs.config().center(b as usize);
                for t in 0..self.targets.len() {
                    if !self.target_final[t] {
                        let w = self.targets[t].gap_ball(c, r);
                        self.relax_target(t, key + w, Via::Ball(b));
                    }
                }
            }
            for &b in cs.members(node) {
                let c = cs.config().center(b as usize);
                self.expand(c, r, key, Via::Ball(b), Some(node));
            }
        }
    }

    /// Relaxes every cluster reachable by one free segment from the point
    /// `center` (a ball of radius `own`, or a point when `own = 0`) settled
    /// at distance `d0`. Balls with a cached neighbor list skip the scan.
    fn expand(&mut self, center: &[f64], own: f64, d0: f64, from: Via, own_cluster: Option<usize>) {
        if let (Some(cache), Via::Ball(b), Some(oc)) = (self.cache, from, own_cluster) {
            if self.cs.config().dim() == 2 {
                let list = cache.get(self.cs, b as usize, oc);
                let bound = self.incumbent();
                let r = self.cs.radius();
                for &(j, rho) in list {
                    self.relax_cluster(j as usize, d0 + (rho - own - r).max(0.0), bound, from);
                }
                return;
            }
        }
        let bound = self.incumbent();
        let mut sink = Expand {
            search: self,
            own,
            d0,
            from,
            own_cluster,
            bound,
        };
        ring_scan(sink.search.cs, center, own, &mut sink);
    }

    fn relax_cluster(&mut self, j: usize, nd: f64, bound: f64, from: Via) {
        let cj = self.cs.cluster_of(j);
        if self.settled[cj] {
            return;
        }
        if nd < bound && nd < self.cluster_dist[cj] {
            self.cluster_dist[cj] = nd;
            self.cluster_via[cj] = from;
            self.cluster_entry[cj] = j as u32;
            self.heap.push(HeapItem { key: nd, node: cj as u32 });
        }
    }

    pub(crate) fn value(&self, t: usize) -> f64 {
        self.target_dist[t]
    }

    fn hops(&self, t: usize) -> Vec<Hop> {
        let mut out = Vec::new();
        let mut via = self.target_via[t];
        while let Via::Ball(b) = via {
            let c = self.cs.cluster_of(b as usize);
            out.push(Hop {
                entry: self.cluster_entry[c],
                exit: b,
                via: self.cluster_via[c],
            });
            via = self.cluster_via[c];
            if via == Via::Start {
                break;
            }
        }
        out.reverse();
        out
    }

    pub(crate) fn clusters_visited(&self, t: usize) -> Vec<usize> {
        self.hops(t).iter().map(|h| self.cs.cluster_of(h.exit as usize)).collect()
    }

    /// Polyline realizing target `t`: free segments between nearest points
    /// of consecutive balls, center hops inside clusters.
    pub(crate) fn polyline(&self, t: usize) -> (Vec<Point>, Vec<bool>) {
        let cfg = self.cs.config();
        let r = cfg.radius();
        let target = &self.targets[t];
        let hops = self.hops(t);
        let mut pts: Vec<Vec<f64>> = vec![self.source.to_vec()];
        let mut free: Vec<bool> = Vec::new();
        let push = |pts: &mut Vec<Vec<f64>>, free: &mut Vec<bool>, p: Vec<f64>, f: bool| {
            if pts.last().is_some_and(|q| *q == p) {
                return;
            }
            pts.push(p);
            free.push(f);
        };
        for (i, h) in hops.iter().enumerate() {
            let ce = cfg.center(h.entry as usize);
            match h.via {
                Via::Start => {}
                Via::Source => {
                    push(&mut pts, &mut free, toward(ce, self.source, r), true);
                }
                Via::Ball(p) => {
                    let cp = cfg.center(p as usize);
                    push(&mut pts, &mut free, toward(ce, cp, r), true);
                }
            }
            let cx = cfg.center(h.exit as usize);
            let exit = match hops.get(i + 1) {
                Some(next) => toward(cx, cfg.center(next.entry as usize), r),
                None => target.exit_point(cx, r),
            };
            if h.entry != h.exit {
                for b in self.center_chain(h.entry, h.exit) {
                    push(&mut pts, &mut free, cfg.center(b as usize).to_vec(), false);
                }
            }
            push(&mut pts, &mut free, exit, false);
        }
        let last = pts.last().cloned().expect("polyline starts at the source");
        push(&mut pts, &mut free, target.landing(&last), true);
        (pts.into_iter().map(Point).collect(), free)
    }

    /// Shortest center-to-center chain between two balls of one cluster.
    fn center_chain(&self, from: u32, to: u32) -> Vec<u32> {
        let cfg = self.cs.config();
        let reach = 2.0 * cfg.radius();
        let mut best: HashMap<u32, (f64, u32)> = HashMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(from, (0.0, from));
        heap.push(HeapItem { key: 0.0, node: from });
        while let Some(HeapItem { key, node }) = heap.pop() {
            if key > best[&node].0 {
                continue;
            }
            if node == to {
                break;
            }
            let c = cfg.center(node as usize);
            let mut nbrs = Vec::new();
            self.cs.index().for_each_within(cfg, c, reach, |j| nbrs.push(j as u32));
            for j in nbrs {
                let nd = key + dist(c, cfg.center(j as usize));
                if best.get(&j).is_none_or(|e| nd < e.0) {
                    best.insert(j, (nd, node));
                    heap.push(HeapItem { key: nd, node: j });
                }
            }
        }
        let mut chain = vec![to];
        let mut cur = to;
        while cur != from {
            cur = best[&cur].1;
            chain.push(cur);
        }
        chain.reverse();
        chain
    }
}

const BINS: usize = 128;

/// Receives the balls met by [`ring_scan`].
trait ScanSink {
    /// Called before ring `k > 0` with the radius `done` already covered;
    /// returning false stops the scan.
    fn keep_going(&mut self, done: f64) -> bool;
    fn visit(&mut self, j: usize, rho: f64);
}

struct Expand<'s, 'a> {
    search: &'s mut Search<'a>,
    own: f64,
    d0: f64,
    from: Via,
    own_cluster: Option<usize>,
    bound: f64,
}

impl ScanSink for Expand<'_, '_> {
    fn keep_going(&mut self, done: f64) -> bool {
        self.bound = self.search.incumbent();
        self.d0 + done - self.own - self.search.cs.radius() < self.bound
    }

    fn visit(&mut self, j: usize, rho: f64) {
        let cj = self.search.cs.cluster_of(j);
        if Some(cj) == self.own_cluster {
            return;
        }
        let r = self.search.cs.radius();
        let nd = self.d0 + (rho - self.own - r).max(0.0);
        self.search.relax_cluster(j, nd, self.bound, self.from);
    }
}

/// Scans balls ring by ring over the grid around `center` (a ball of
/// radius `own`, or a point when `own = 0`). The sink may stop the scan
/// (`A`); in the plane it also stops once already seen blocker balls
/// shadow every direction (`B`).
///
/// For `B`: let `b` be a seen ball at center distance `ρ_b > own + r`
/// whose shadow cone (half-angle `asin(r/ρ_b)`) contains the unseen
/// center `c_j`, so `ρ_j ≥ ρ_b`. The segment `center → c_j` then passes
/// within `r` of `c_b` at a point `q`, hence
/// `ρ_b + |c_b - c_j| ≤ |center - q| + r + |q - c_j| + r = ρ_j + 2r`,
/// i.e. going through `b` costs no more than the direct segment. Since
/// `|c_b - c_j| < ρ_j`, induction on center distance shows `j` is still
/// reached optimally from `b`'s own scan.
fn ring_scan(cs: &ClusterSet, center: &[f64], own: f64, sink: &mut impl ScanSink) {
    let cfg = cs.config();
    let idx = cs.index();
    if idx.is_empty() {
        return;
    }
    let r = cfg.radius();
    let cell = idx.cell_size();
    let home = idx.cell_of(center);
    let last = idx.last_ring(&home);
    let mut shadow = (cfg.dim() == 2).then(|| Shadow::new(center, cell, idx.bounds()));
    let mut k = 0i64;
    let mut found: Vec<usize> = Vec::new();
    loop {
        if k > 0 {
            let done = (k - 1) as f64 * cell;
            if !sink.keep_going(done) {
                return;
            }
            if let Some(sh) = shadow.as_mut() {
                if sh.closed(k as usize - 1, done) {
                    return;
                }
            }
        }
        found.clear();
        idx.for_each_in_ring(&home, k, |j| found.push(j));
        for &j in &found {
            let pj = cfg.center(j);
            let rho = dist(center, pj);
            if rho > own + r {
                if let Some(sh) = shadow.as_mut() {
                    sh.add(pj, rho, (r / rho).asin());
                }
            }
            sink.visit(j, rho);
        }
        if k >= last {
            return;
        }
        k += 1;
    }
}

/// Neighbor lists of a full ring scan around each ball, shared by all
/// searches over one planar cluster set.
///
/// Without the pruning rule `A` a scan does not depend on the source, so
/// its list serves every later search; rule `B` alone keeps it exact.
#[derive(Debug)]
pub struct NeighborCache {
    lists: Vec<OnceLock<Vec<(u32, f64)>>>,
}

impl NeighborCache {
    pub fn new(cs: &ClusterSet) -> Self {
        NeighborCache {
            lists: (0..cs.config().len()).map(|_| OnceLock::new()).collect(),
        }
    }

    fn get(&self, cs: &ClusterSet, ball: usize, own_cluster: usize) -> &[(u32, f64)] {
        self.lists[ball].get_or_init(|| {
            struct Collect<'c> {
                cs: &'c ClusterSet,
                own: usize,
                out: Vec<(u32, f64)>,
            }
            impl ScanSink for Collect<'_> {
                fn keep_going(&mut self, _: f64) -> bool {
                    true
                }
                fn visit(&mut self, j: usize, rho: f64) {
                    if self.cs.cluster_of(j) != self.own {
                        self.out.push((j as u32, rho));
                    }
                }
            }
            let mut c = Collect {
                cs,
                own: own_cluster,
                out: Vec::new(),
            };
            ring_scan(cs, cs.config().center(ball), cs.radius(), &mut c);
            c.out
        })
    }
}

/// Directions around a planar scan center that are already accounted for.
///
/// A direction is closed when it lies in the shadow cone of an applied
/// blocker, or when the grid holds no cell in that direction beyond the
/// completed radius (checked per angular bin, conservatively). Closing the
/// whole circle proves that no unseen ball needs a direct edge.
struct Shadow {
    center: [f64; 2],
    cell: f64,
    /// Disjoint closed arcs within `[0, 2π]`, sorted.
    arcs: Vec<(f64, f64)>,
    /// Blockers keyed by the first completed ring index that contains them.
    buckets: Vec<Vec<(f64, f64)>>,
    drained: usize,
    /// Grid bounds when the center lies inside them.
    bounds: Option<([f64; 2], [f64; 2])>,
    margin: f64,
    dead: Vec<bool>,
}

impl Shadow {
    fn new(center: &[f64], cell: f64, (lo, hi): (Vec<f64>, Vec<f64>)) -> Self {
        let c = [center[0], center[1]];
        let inside = (0..2).all(|k| c[k] >= lo[k] && c[k] <= hi[k]);
        let margin = (0..2)
            .map(|k| (c[k] - lo[k]).min(hi[k] - c[k]))
            .fold(f64::INFINITY, f64::min);
        Shadow {
            center: c,
            cell,
            arcs: Vec::new(),
            buckets: Vec::new(),
            drained: 0,
            bounds: inside.then_some(([lo[0], lo[1]], [hi[0], hi[1]])),
            margin,
            dead: Vec::new(),
        }
    }

    fn add(&mut self, p: &[f64], rho: f64, half: f64) {
        let m = (rho / self.cell).floor() as usize + 1;
        if self.buckets.len() <= m {
            self.buckets.resize(m + 1, Vec::new());
        }
        let phi = (p[1] - self.center[1]).atan2(p[0] - self.center[0]);
        self.buckets[m].push((phi, half));
    }

    fn insert(&mut self, s: f64, e: f64) {
        let i = self.arcs.partition_point(|a| a.1 < s);
        let mut j = i;
        let (mut s, mut e) = (s, e);
        while j < self.arcs.len() && self.arcs[j].0 <= e {
            s = s.min(self.arcs[j].0);
            e = e.max(self.arcs[j].1);
            j += 1;
        }
        self.arcs.splice(i..j, [(s, e)]);
    }

    fn close_cone(&mut self, phi: f64, half: f64) {
        let s = (phi - half).rem_euclid(TAU);
        let e = s + 2.0 * half;
        if e > TAU {
            self.insert(s, TAU);
            self.insert(0.0, e - TAU);
        } else {
            self.insert(s, e);
        }
    }

    /// Longest ray from the center to the grid boundary with direction in
    /// bin `b`.
    fn reach(&self, b: usize, lo: &[f64; 2], hi: &[f64; 2]) -> f64 {
        let w = TAU / BINS as f64;
        let (a0, a1) = (b as f64 * w, (b + 1) as f64 * w);
        let exit = |a: f64| {
            let dir = [a.cos(), a.sin()];
            let mut t = f64::INFINITY;
            for k in 0..2 {
                if dir[k] > 1e-15 {
                    t = t.min((hi[k] - self.center[k]) / dir[k]);
                } else if dir[k] < -1e-15 {
                    t = t.min((lo[k] - self.center[k]) / dir[k]);
                }
            }
            t
        };
        let mut m = exit(a0).max(exit(a1));
        for cx in [lo[0], hi[0]] {
            for cy in [lo[1], hi[1]] {
                let a = (cy - self.center[1]).atan2(cx - self.center[0]).rem_euclid(TAU);
                if a >= a0 && a <= a1 {
                    m = m.max(((cx - self.center[0]).powi(2) + (cy - self.center[1]).powi(2)).sqrt());
                }
            }
        }
        m
    }

    fn full(&self) -> bool {
        self.arcs.len() == 1 && self.arcs[0].0 <= 0.0 && self.arcs[0].1 >= TAU
    }

    /// Applies blockers lying strictly inside the completed radius `done`
    /// (rings `0..=ring` scanned) and reports whether the circle is closed.
    fn closed(&mut self, ring: usize, done: f64) -> bool {
        while self.drained <= ring && self.drained < self.buckets.len() {
            let bucket = std::mem::take(&mut self.buckets[self.drained]);
            for (phi, half) in bucket {
                self.close_cone(phi, half);
            }
            self.drained += 1;
        }
        self.drained = self.drained.max(ring + 1);
        if !self.full() && done > self.margin {
            if let Some((lo, hi)) = self.bounds {
                if self.dead.is_empty() {
                    self.dead = vec![false; BINS];
                }
                let w = TAU / BINS as f64;
                for b in 0..BINS {
                    if !self.dead[b] && self.reach(b, &lo, &hi) * (1.0 + 1e-12) < done {
                        self.dead[b] = true;
                        self.insert(b as f64 * w, (b + 1) as f64 * w);
                    }
                }
            }
        }
        self.full()
    }
}

fn validate(cs: &ClusterSet, p: &[f64], what: &str) -> Result<()> {
    check_dim(p, cs.config().dim(), what)
}

fn result(s: &Search, t: usize, with_path: bool) -> DistanceResult {
    let (geodesic, free) = if with_path { s.polyline(t) } else { (Vec::new(), Vec::new()) };
    DistanceResult {
        value: s.value(t),
        geodesic,
        free,
        clusters_visited: s.clusters_visited(t),
        exact: true,
        refinement: 0,
        approximate: false,
    }
}

/// Exact `xi = 0` distance from `x` to `y`; the polyline is left empty (see
/// [`geodesic_xi0`]).
pub fn distance_xi0(cs: &ClusterSet, x: &[f64], y: &[f64]) -> Result<DistanceResult> {
    validate(cs, x, "x")?;
    validate(cs, y, "y")?;
    let s = Search::run(cs, x, vec![Target::Point(y.to_vec())]);
    Ok(result(&s, 0, false))
}

/// [`distance_xi0`] together with a realizing polyline.
pub fn geodesic_xi0(cs: &ClusterSet, x: &[f64], y: &[f64]) -> Result<DistanceResult> {
    validate(cs, x, "x")?;
    validate(cs, y, "y")?;
    let s = Search::run(cs, x, vec![Target::Point(y.to_vec())]);
    Ok(result(&s, 0, true))
}

/// Exact distances from `x` to every point of `ys` in one search.
pub fn distances_xi0<P: AsRef<[f64]>>(cs: &ClusterSet, x: &[f64], ys: &[P]) -> Result<Vec<f64>> {
    validate(cs, x, "x")?;
    for y in ys {
        validate(cs, y.as_ref(), "y")?;
    }
    let targets = ys.iter().map(|y| Target::Point(y.as_ref().to_vec())).collect();
    let s = Search::run(cs, x, targets);
    Ok((0..ys.len()).map(|t| s.value(t)).collect())
}

/// [`distances_xi0`] reusing per-ball neighbor lists across calls; the
/// cache must have been built for `cs`.
pub fn distances_xi0_cached<P: AsRef<[f64]>>(
    cs: &ClusterSet,
    cache: &NeighborCache,
    x: &[f64],
    ys: &[P],
) -> Result<Vec<f64>> {
    if cache.lists.len() != cs.config().len() {
        return Err(Error::invalid("cache", "built for a different configuration"));
    }
    validate(cs, x, "x")?;
    for y in ys {
        validate(cs, y.as_ref(), "y")?;
    }
    let targets = ys.iter().map(|y| Target::Point(y.as_ref().to_vec())).collect();
    let s = Search::run_with(cs, x, targets, Some(cache));
    Ok((0..ys.len()).map(|t| s.value(t)).collect())
}

/// Exact distance from `x` to the hyperplane `{p : p[axis] = level}`.
pub fn distance_to_hyperplane(cs: &ClusterSet, x: &[f64], axis: usize, level: f64) -> Result<f64> {
    validate(cs, x, "x")?;
    if axis >= x.len() {
        return Err(Error::invalid("axis", format!("axis {axis} out of range")));
    }
    if !level.is_finite() {
        return Err(Error::invalid("level", "must be finite"));
    }
    let s = Search::run(cs, x, vec![Target::Hyperplane { axis, level }]);
    Ok(s.value(0))
}
