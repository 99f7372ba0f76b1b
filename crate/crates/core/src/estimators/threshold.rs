use serde::Serialize;

use super::{check_replicas, replicate};
use crate::clusters::{build_index, UnionFind};
use crate::error::{Error, Result};
use crate::model::BoxRegion;
use crate::sampler::sample_marked;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingRow {
    pub side: f64,
    pub u: f64,
    pub probability: f64,
    pub stderr: f64,
    pub crossings: usize,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub rows: Vec<CrossingRow>,
    /// `(side, u*)`, where `u*` is the interpolated 0.5 crossing point, or
    /// `None` when the grid does not bracket it.
    pub u_star: Vec<(f64, Option<f64>)>,
    /// Largest relative difference between an estimate and the one at the
    /// largest side.
    pub stability: Option<f64>,
    /// Per side, per replica: crossing indicator at each grid level.
    #[serde(skip)]
    pub per_replica: Vec<Vec<Vec<bool>>>,
}

/// Crossing indicators of one marked sample at each level of `u_grid`.
///
/// Balls are added in mark order; a cluster crosses when it contains a ball
/// meeting the face `x_0 = 0` and one meeting `x_0 = side`.
fn crossings(region: &BoxRegion, u_grid: &[f64], rng: &mut impl rand::Rng) -> Result<Vec<bool>> {
    let u_max = u_grid[u_grid.len() - 1];
    if u_max == 0.0 {
        return Ok(vec![false; u_grid.len()]);
    }
    let marked = sample_marked(region, u_max, rng)?;
    let cfg = marked.points();
    let r = cfg.radius();
    let idx = build_index(cfg);
    let mut order: Vec<usize> = (0..cfg.len()).collect();
    order.sort_by(|&a, &b| marked.marks()[a].total_cmp(&marked.marks()[b]));
    let mut uf = UnionFind::new(cfg.len());
    let mut added = vec![false; cfg.len()];
    let mut left = vec![false; cfg.len()];
    let mut right = vec![false; cfg.len()];
    let mut crossed = false;
    let mut next = 0;
    let mut out = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        while !crossed && next < order.len() && marked.marks()[order[next]] <= u {
            let i = order[next];
            next += 1;
            added[i] = true;
            let c = cfg.center(i);
            let ri = uf.find(i as u32) as usize;
            left[ri] = c[0] - region.lo[0] <= r;
            right[ri] = region.hi[0] - c[0] <= r;
            let mut nbrs = Vec::new();
            idx.for_each_within(cfg, c, 2.0 * r, |j| {
                if j != i && added[j] {
                    nbrs.push(j);
                }
            });
            for j in nbrs {
                let (a, b) = (uf.find(i as u32) as usize, uf.find(j as u32) as usize);
                if a != b {
                    let (l, rr) = (left[a] || left[b], right[a] || right[b]);
                    uf.union(a as u32, b as u32);
                    let root = uf.find(a as u32) as usize;
                    left[root] = l;
                    right[root] = rr;
                }
            }
            let root = uf.find(i as u32) as usize;
            crossed = left[root] && right[root];
        }
        out.push(crossed);
    }
    Ok(out)
}

fn interpolate_half(us: &[f64], ps: &[f64]) -> Option<f64> {
    let k = ps.iter().position(|&p| p >= 0.5)?;
    if k == 0 {
        return None;
    }
    let (u0, u1, p0, p1) = (us[k - 1], us[k], ps[k - 1], ps[k]);
    Some(u0 + (0.5 - p0) / (p1 - p0) * (u1 - u0))
}

/// Left-right crossing probabilities of `[0, side]^d` over a grid of
/// intensities. Each replica uses one marked sample, so indicators are
/// nondecreasing in `u` on every replica. Side `i` uses task `task + i`.
pub fn threshold_scan(
    u_grid: &[f64],
    d: usize,
    sides: &[f64],
    replicas: usize,
    seed: u64,
    task: u64,
) -> Result<ThresholdReport> {
    check_replicas(replicas, 1)?;
    if u_grid.is_empty() || u_grid.iter().any(|u| !(*u >= 0.0 && u.is_finite())) {
        return Err(Error::invalid("u_grid", "intensities must be finite and nonnegative"));
    }
    if u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("u_grid", "grid must be strictly increasing"));
    }
    if sides.is_empty() || sides.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("sides", "box sides must be positive"));
    }
    let mut rows = Vec::new();
    let mut u_star = Vec::new();
    let mut per_replica = Vec::new();
    for (si, &side) in sides.iter().enumerate() {
        let region = BoxRegion::cube(d, 0.0, side)?;
        let ind = replicate(seed, task + si as u64, replicas, |_, stream| {
            crossings(&region, u_grid, &mut stream.rng())
        })?;
        let mut ps = Vec::new();
        for (k, &u) in u_grid.iter().enumerate() {
            let hits = ind.iter().filter(|v| v[k]).count();
            let p = hits as f64 / replicas as f64;
            ps.push(p);
            rows.push(CrossingRow {
                side,
                u,
                probability: p,
                stderr: (p * (1.0 - p) / replicas as f64).sqrt(),
                crossings: hits,
                replicas,
            });
        }
        u_star.push((side, interpolate_half(u_grid, &ps)));
        per_replica.push(ind);
    }
    let stability = match u_star.last() {
        Some((_, Some(top))) => u_star
            .iter()
            .map(|(_, v)| v.map(|v| (v - top).abs() / top))
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.into_iter().fold(0.0, f64::max)),
        _ => None,
    };
    Ok(ThresholdReport {
        rows,
        u_star,
        stability,
        per_replica,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_intensity_never_crosses() {
        let r = threshold_scan(&[0.0], 2, &[20.0], 5, 1, 0).unwrap();
        assert_eq!(r.rows[0].probability, 0.0);
        assert_eq!(r.u_star[0].1, None);
    }

    #[test]
    fn crossing_is_monotone_per_replica() {
        let r = threshold_scan(&[0.1, 0.3, 0.5, 0.8], 2, &[15.0], 20, 3, 0).unwrap();
        for v in &r.per_replica[0] {
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(r.rows.last().unwrap().probability, 1.0);
    }

    #[test]
    fn interpolation() {
        assert_eq!(interpolate_half(&[0.1, 0.2, 0.3], &[0.0, 0.25, 0.75]), Some(0.25));
        assert_eq!(interpolate_half(&[0.1, 0.2], &[0.0, 0.2]), None);
    }
}
