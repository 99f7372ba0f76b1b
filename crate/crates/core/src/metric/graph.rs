//! Upper-bound distances for `0 < xi < 1`.
//!
//! Nodes are the two endpoints and `K` points on every defect sphere; any
//! two nodes are joined by a straight segment priced with
//! [`segment_cost`](super::segment_cost). Node sets are nested in `K`, so
//! refining never increases the value.

use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use super::segment::segment_cost_unchecked;
use super::{DistanceResult, HeapItem};
use crate::clusters::ClusterSet;
use crate::error::{Error, Result};
use crate::model::{check_dim, dist, Domain, Point};

/// Radical inverse of `j` in base 2.
fn van_der_corput(mut j: u64) -> f64 {
    let mut x = 0.0;
    let mut f = 0.5;
    while j > 0 {
        if j & 1 == 1 {
            x += f;
        }
        j >>= 1;
        f *= 0.5;
    }
    x
}

/// `j`-th boundary node of a ball, as an offset from its center.
///
/// In the plane node `j` of `K` sits at angle `2π j / K`; in space node `j`
/// is the `j`-th point of an infinite equal-area sequence on the sphere, so
/// the first `K` nodes are shared by every larger `K`.
pub fn boundary_node(d: usize, radius: f64, j: usize, k: usize) -> Result<Vec<f64>> {
    match d {
        2 => {
            let a = TAU * (j as f64 / k as f64);
            Ok(vec![radius * a.cos(), radius * a.sin()])
        }
        3 => {
            let z = 1.0 - 2.0 * van_der_corput(j as u64 + 1);
            let golden = 0.618_033_988_749_894_9;
            let a = TAU * (j as f64 * golden).fract();
            let s = (1.0 - z * z).max(0.0).sqrt();
            Ok(vec![radius * s * a.cos(), radius * s * a.sin(), radius * z])
        }
        _ => Err(Error::invalid("d", "boundary nodes are defined for d = 2 and d = 3")),
    }
}

pub(crate) struct GraphQuery<'a> {
    pub cs: &'a ClusterSet,
    pub xi: f64,
    pub k: usize,
    pub domain: Option<&'a Domain>,
    /// Extra waypoints (reflex corners of a non-convex domain).
    pub extra: &'a [Point],
}

impl GraphQuery<'_> {
    pub(crate) fn run(&self, x: &[f64], y: &[f64]) -> Result<DistanceResult> {
        let cfg = self.cs.config();
        let d = cfg.dim();
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::invalid("xi", "graph distance needs 0 < xi < 1"));
        }
        if self.k < 4 {
            return Err(Error::invalid("K", "need at least 4 boundary nodes per ball"));
        }
        if d != 2 && d != 3 {
            return Err(Error::invalid("d", "graph distance supports d = 2 and d = 3"));
        }
        check_dim(x, d, "x")?;
        check_dim(y, d, "y")?;
        let r = cfg.radius();
        let offsets: Vec<Vec<f64>> = (0..self.k)
            .map(|j| boundary_node(d, r, j, self.k))
            .collect::<Result<_>>()?;
        let mut nodes: Vec<Vec<f64>> = vec![x.to_vec(), y.to_vec()];
        let mut owner: Vec<Option<usize>> = vec![None, None];
        nodes.extend(self.extra.iter().map(|p| p.0.clone()));
        owner.extend(self.extra.iter().map(|_| None));
        for (i, c) in cfg.centers().enumerate() {
            for off in &offsets {
                let p: Vec<f64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
                if self.domain.is_none_or(|dm| dm.contains_point(&p)) {
                    nodes.push(p);
                    owner.push(Some(i));
                }
            }
        }
        let n = nodes.len();
        let mut best = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[0] = 0.0;
        heap.push(HeapItem { key: 0.0, node: 0 });
        while let Some(HeapItem { key, node }) = heap.pop() {
            let v = node as usize;
            if done[v] || key > best[v] {
                continue;
            }
            done[v] = true;
            if v == 1 {
                break;
            }
            let pv = &nodes[v];
            for u in 1..n {
                if done[u] {
                    continue;
                }
                let pu = &nodes[u];
                let lb = key + self.xi * dist(pv, pu);
                if lb >= best[1] || lb >= best[u] {
                    continue;
                }
                if let Some(dm) = self.domain {
                    if !dm.segment_inside(pv, pu) {
                        continue;
                    }
                }
                let nd = key + segment_cost_unchecked(self.cs, self.xi, pv, pu);
                if nd < best[u] {
                    best[u] = nd;
                    pred[u] = v;
                    heap.push(HeapItem { key: nd, node: u as u32 });
                }
            }
        }
        if !best[1].is_finite() {
            return Err(Error::NotFound("no admissible path between the endpoints".into()));
        }
        let mut chain = vec![1usize];
        while *chain.last().unwrap() != 0 {
            chain.push(pred[*chain.last().unwrap()]);
        }
        chain.reverse();
        let mut visited: Vec<usize> = Vec::new();
        for &v in &chain {
            if let Some(b) = owner[v] {
                let c = self.cs.cluster_of(b);
                if visited.last() != Some(&c) {
                    visited.push(c);
                }
            }
        }
        let geodesic: Vec<Point> = chain.iter().map(|&v| Point(nodes[v].clone())).collect();
        let free = geodesic
            .windows(2)
            .map(|w| super::covered_length(self.cs, &w[0], &w[1]) == 0.0)
            .collect();
        Ok(DistanceResult {
            value: best[1],
            geodesic,
            free,
            clusters_visited: visited,
            exact: false,
            refinement: self.k,
            approximate: false,
        })
    }
}

/// Graph upper bound on the `xi`-metric distance with `k` nodes per ball.
pub fn distance_graph_xi(cs: &ClusterSet, xi: f64, x: &[f64], y: &[f64], k: usize) -> Result<DistanceResult> {
    GraphQuery {
        cs,
        xi,
        k,
        domain: None,
        extra: &[],
    }
    .run(x, y)
}
