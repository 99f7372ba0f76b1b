//! Distances restricted to paths inside a domain.
//!
//! Only balls centered in the domain take part. For a convex domain every
//! such ball meets the domain in a convex set containing its center, and two
//! overlapping balls share the midpoint of their centers, so each cluster
//! stays connected inside the domain and the exact engine applies unchanged:
//! all its segments join points of the domain. The result is flagged
//! approximate when a ball centered outside the domain reaches into it,
//! because that ball is ignored.
//!
//! A union of boxes is handled by a visibility graph over the endpoints, the
//! reflex corners and the ball centers. Without balls this is the exact
//! polygonal shortest path; with balls it is an upper bound and flagged.

use std::collections::BinaryHeap;

use super::exact::{distances_xi0_cached, geodesic_xi0, NeighborCache};
use super::graph::GraphQuery;
use super::{DistanceResult, HeapItem};
use crate::clusters::{find_clusters, ClusterSet};
use crate::error::{Error, Result};
use crate::model::{check_dim, dist, Domain, Point, PointConfiguration};

/// Domain-restricted metric over one configuration.
#[derive(Debug)]
pub struct IntrinsicMetric {
    domain: Domain,
    full: ClusterSet,
    restricted: ClusterSet,
    cache: NeighborCache,
    outside_reach: bool,
    corners: Vec<Point>,
}

impl IntrinsicMetric {
    pub fn new(config: &PointConfiguration, domain: &Domain) -> Result<Self> {
        if domain.dim() != config.dim() {
            return Err(Error::invalid("domain", "dimension differs from the configuration"));
        }
        let r = config.radius();
        let inside = config.filtered(|c| domain.contains_point(c));
        let outside_reach = config
            .centers()
            .any(|c| !domain.contains_point(c) && domain.ball_meets_boundary(c, r));
        let restricted = find_clusters(&inside);
        Ok(IntrinsicMetric {
            domain: domain.clone(),
            full: find_clusters(config),
            cache: NeighborCache::new(&restricted),
            restricted,
            outside_reach,
            corners: domain.reflex_corners(),
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Clusters of the balls centered in the domain.
    pub fn cluster_set(&self) -> &ClusterSet {
        &self.restricted
    }

    /// Whether `xi = 0` results carry the approximate flag.
    pub fn is_approximate(&self) -> bool {
        self.outside_reach || (!self.domain.is_convex() && !self.restricted.config().is_empty())
    }

    fn check(&self, p: &[f64], what: &str) -> Result<()> {
        check_dim(p, self.domain.dim(), what)?;
        if !self.domain.contains_point(p) {
            return Err(Error::invalid(what, "point lies outside the domain"));
        }
        Ok(())
    }

    /// Distance from `x` to `y` along paths in the domain; `k` is the node
    /// count per ball used when `xi > 0`.
    pub fn distance(&self, x: &[f64], y: &[f64], xi: f64, k: usize) -> Result<DistanceResult> {
        self.check(x, "x")?;
        self.check(y, "y")?;
        if !(0.0..1.0).contains(&xi) {
            return Err(Error::invalid("xi", "dilatation factor must lie in [0, 1)"));
        }
        if xi > 0.0 {
            return GraphQuery {
                cs: &self.full,
                xi,
                k,
                domain: Some(&self.domain),
                extra: &self.corners,
            }
            .run(x, y);
        }
        let mut res = if self.domain.is_convex() {
            geodesic_xi0(&self.restricted, x, y)?
        } else {
            self.visibility(x, y)?
        };
        res.approximate = self.is_approximate();
        Ok(res)
    }

    /// `xi = 0` distances from `x` to each of `ys`.
    pub fn distances_from<P: AsRef<[f64]>>(&self, x: &[f64], ys: &[P]) -> Result<Vec<f64>> {
        self.check(x, "x")?;
        for y in ys {
            self.check(y.as_ref(), "y")?;
        }
        if self.domain.is_convex() {
            distances_xi0_cached(&self.restricted, &self.cache, x, ys)
        } else {
            ys.iter().map(|y| Ok(self.visibility(x, y.as_ref())?.value)).collect()
        }
    }

    /// Dense Dijkstra over endpoints, reflex corners and ball centers; every
    /// edge is a straight segment checked to stay in the domain.
    fn visibility(&self, x: &[f64], y: &[f64]) -> Result<DistanceResult> {
        let cfg = self.restricted.config();
        let r = cfg.radius();
        let mut pts: Vec<&[f64]> = vec![x, y];
        pts.extend(self.corners.iter().map(|p| &p.0[..]));
        let np = pts.len();
        pts.extend(cfg.centers());
        let n = pts.len();
        let weight = |a: usize, b: usize| -> f64 {
            let e = dist(pts[a], pts[b]);
            let shrink = [a, b].iter().filter(|&&v| v >= np).count() as f64 * r;
            (e - shrink).max(0.0)
        };
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
            for u in 1..n {
                if done[u] {
                    continue;
                }
                let nd = key + weight(v, u);
                if nd < best[u] && nd < best[1] && self.domain.segment_inside(pts[v], pts[u]) {
                    best[u] = nd;
                    pred[u] = v;
                    heap.push(HeapItem { key: nd, node: u as u32 });
                }
            }
        }
        if !best[1].is_finite() {
            return Err(Error::NotFound("endpoints are not connected inside the domain".into()));
        }
        let mut chain = vec![1usize];
        while *chain.last().unwrap() != 0 {
            chain.push(pred[*chain.last().unwrap()]);
        }
        chain.reverse();
        let geodesic: Vec<Point> = chain.iter().map(|&v| Point(pts[v].to_vec())).collect();
        let free = chain.windows(2).map(|w| w[0] < np && w[1] < np).collect();
        let mut visited = Vec::new();
        for &v in &chain {
            if v >= np {
                let c = self.restricted.cluster_of(v - np);
                if visited.last() != Some(&c) {
                    visited.push(c);
                }
            }
        }
        Ok(DistanceResult {
            value: best[1],
            geodesic,
            free,
            clusters_visited: visited,
            exact: cfg.is_empty(),
            refinement: 0,
            approximate: false,
        })
    }
}

/// One-shot form of [`IntrinsicMetric::distance`].
pub fn distance_intrinsic(
    cs: &ClusterSet,
    domain: &Domain,
    x: &[f64],
    y: &[f64],
    xi: f64,
    k: usize,
) -> Result<DistanceResult> {
    IntrinsicMetric::new(cs.config(), domain)?.distance(x, y, xi, k)
}
