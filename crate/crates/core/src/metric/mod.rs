//! Distances in the defect metric.
//!
//! With `xi = 0` every cluster of defects collapses to a point and the
//! distance is the shortest free (outside-defect) length, computed exactly
//! by Dijkstra over clusters. With `xi > 0` a refinable geometric graph gives
//! an upper bound that decreases as nodes are added.

mod exact;
mod graph;
mod intrinsic;
mod segment;

use serde::Serialize;

use crate::model::Point;

pub use exact::{
    distance_to_hyperplane, distance_xi0, distances_xi0, distances_xi0_cached, geodesic_xi0, NeighborCache,
};
pub use graph::{boundary_node, distance_graph_xi};
pub use intrinsic::{distance_intrinsic, IntrinsicMetric};
pub use segment::{covered_length, segment_cost};

/// A distance value with the path that realizes it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceResult {
    pub value: f64,
    /// Polyline from the source to the target; empty unless requested.
    pub geodesic: Vec<Point>,
    /// One flag per polyline segment: true when the segment is charged its
    /// full length (it runs outside the defects).
    pub free: Vec<bool>,
    pub clusters_visited: Vec<usize>,
    pub exact: bool,
    /// Boundary nodes per ball (0 for the exact engine).
    pub refinement: usize,
    /// Set when the domain restriction could not be honored exactly.
    pub approximate: bool,
}

impl DistanceResult {
    /// Euclidean length of the geodesic polyline.
    pub fn polyline_length(&self) -> f64 {
        self.geodesic
            .windows(2)
            .map(|w| crate::model::dist(&w[0], &w[1]))
            .sum()
    }

    /// Length of the segments flagged free.
    pub fn free_length(&self) -> f64 {
        self.geodesic
            .windows(2)
            .zip(&self.free)
            .filter(|(_, f)| **f)
            .map(|(w, _)| crate::model::dist(&w[0], &w[1]))
            .sum()
    }
}

/// Min-heap entry keyed by a nonnegative distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct HeapItem {
    pub key: f64,
    pub node: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
