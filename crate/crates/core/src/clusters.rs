//! Connected components of the occupied set (the union of closed defect
//! balls), with a uniform-grid spatial index for neighbor and ring queries.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{dist, dist2, PointConfiguration};

/// Uniform grid over the bounding box of a configuration.
///
/// Cells are stored densely in CSR form: `items[start[c]..start[c + 1]]`
/// lists the centers of cell `c`.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    dim: usize,
    cell_size: f64,
    origin: Vec<f64>,
    shape: Vec<i64>,
    start: Vec<u32>,
    items: Vec<u32>,
}

const MAX_CELLS_PER_POINT: usize = 8;

impl SpatialIndex {
    /// Index with the default cell size of one ball diameter.
    pub fn build(config: &PointConfiguration) -> SpatialIndex {
        Self::with_cell_size(config, 2.0 * config.radius())
    }

    /// `cell_size` below the ball diameter is raised to it, so overlap
    /// candidates always lie in the 3^d surrounding cells.
    pub fn with_cell_size(config: &PointConfiguration, cell_size: f64) -> SpatialIndex {
        let dim = config.dim();
        let mut cell_size = cell_size.max(2.0 * config.radius());
        let n = config.len();
        if n == 0 {
            return SpatialIndex {
                dim,
                cell_size,
                origin: vec![0.0; dim],
                shape: vec![1; dim],
                start: vec![0, 0],
                items: Vec::new(),
            };
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for c in config.centers() {
            for k in 0..dim {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let budget = (MAX_CELLS_PER_POINT * n).max(1 << 12) as f64;
        let shape = loop {
            let shape: Vec<i64> = (0..dim)
                .map(|k| ((hi[k] - lo[k]) / cell_size).floor() as i64 + 1)
                .collect();
            if shape.iter().map(|&s| s as f64).product::<f64>() <= budget {
                break shape;
            }
            cell_size *= 1.5;
        };
        let ncells: usize = shape.iter().product::<i64>() as usize;
        let mut idx = SpatialIndex {
            dim,
            cell_size,
            origin: lo,
            shape,
            start: vec![0; ncells + 1],
            items: vec![0; n],
        };
        let cells: Vec<usize> = config
            .centers()
            .map(|c| idx.flat(&idx.cell_of(c)).expect("center lies in its own bounding box"))
            .collect();
        for &c in &cells {
            idx.start[c + 1] += 1;
        }
        for c in 0..ncells {
            idx.start[c + 1] += idx.start[c];
        }
        let mut fill = idx.start.clone();
        for (i, &c) in cells.iter().enumerate() {
            idx.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        idx
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn cell_of(&self, p: &[f64]) -> Vec<i64> {
        (0..self.dim)
            .map(|k| ((p[k] - self.origin[k]) / self.cell_size).floor() as i64)
            .collect()
    }

    fn flat(&self, cell: &[i64]) -> Option<usize> {
        let mut f = 0i64;
        for k in 0..self.dim {
            if cell[k] < 0 || cell[k] >= self.shape[k] {
                return None;
            }
            f = f * self.shape[k] + cell[k];
        }
        Some(f as usize)
    }

    /// Centers stored in `cell` (empty outside the grid).
    pub fn cell_items(&self, cell: &[i64]) -> &[u32] {
        match self.flat(cell) {
            Some(f) => &self.items[self.start[f] as usize..self.start[f + 1] as usize],
            None => &[],
        }
    }

    /// Calls `f` on every center within Euclidean distance `r` of `p`.
    pub fn for_each_within(
        &self,
        config: &PointConfiguration,
        p: &[f64],
        r: f64,
        mut f: impl FnMut(usize),
    ) {
        if self.is_empty() {
            return;
        }
        let lo: Vec<f64> = p.iter().map(|v| v - r).collect();
        let hi: Vec<f64> = p.iter().map(|v| v + r).collect();
        let r2 = r * r;
        self.for_each_in_box(&lo, &hi, |i| {
            if dist2(config.center(i), p) <= r2 {
                f(i)
            }
        });
    }

    /// Calls `f` on every center whose cell meets the box `[lo, hi]`
    /// (a superset of the centers inside the box).
    pub fn for_each_in_box(&self, lo: &[f64], hi: &[f64], mut f: impl FnMut(usize)) {
        if self.is_empty() {
            return;
        }
        let a: Vec<i64> = self.cell_of(lo).iter().zip(&self.shape).map(|(c, s)| (*c).clamp(0, s - 1)).collect();
        let b: Vec<i64> = self.cell_of(hi).iter().zip(&self.shape).map(|(c, s)| (*c).clamp(0, s - 1)).collect();
        if (0..self.dim).any(|k| {
            let lo_cell = ((lo[k] - self.origin[k]) / self.cell_size).floor() as i64;
            let hi_cell = ((hi[k] - self.origin[k]) / self.cell_size).floor() as i64;
            hi_cell < 0 || lo_cell >= self.shape[k]
        }) {
            return;
        }
        let mut cell = a.clone();
        loop {
            for &i in self.cell_items(&cell) {
                f(i as usize);
            }
            let mut k = self.dim;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cell[k] < b[k] {
                    cell[k] += 1;
                    break;
                }
                cell[k] = a[k];
            }
        }
    }

    /// Box covered by the grid cells (contains every indexed center).
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let hi = (0..self.dim)
            .map(|k| self.origin[k] + self.shape[k] as f64 * self.cell_size)
            .collect();
        (self.origin.clone(), hi)
    }

    /// Largest ring index around `home` that still meets the grid.
    pub fn last_ring(&self, home: &[i64]) -> i64 {
        (0..self.dim)
            .map(|k| home[k].abs().max((home[k] - (self.shape[k] - 1)).abs()))
            .max()
            .unwrap_or(0)
    }

    /// Calls `f` on the centers of every cell at Chebyshev distance exactly
    /// `k` from `home`. Returns false when the ring misses the grid.
    pub fn for_each_in_ring(&self, home: &[i64], k: i64, mut f: impl FnMut(usize)) -> bool {
        let mut any = false;
        let mut cell = vec![0i64; self.dim];
        self.ring_rec(home, k, 0, false, &mut cell, &mut any, &mut f);
        any
    }

    #[allow(clippy::too_many_arguments)]
    fn ring_rec(
        &self,
        home: &[i64],
        k: i64,
        axis: usize,
        hit: bool,
        cell: &mut Vec<i64>,
        any: &mut bool,
        f: &mut impl FnMut(usize),
    ) {
        if axis == self.dim {
            if hit {
                if let Some(fl) = self.flat(cell) {
                    *any = true;
                    for &i in &self.items[self.start[fl] as usize..self.start[fl + 1] as usize] {
                        f(i as usize);
                    }
                }
            }
            return;
        }
        let lo = (home[axis] - k).max(0);
        let hi = (home[axis] + k).min(self.shape[axis] - 1);
        if lo > hi {
            return;
        }
        let last = axis + 1 == self.dim;
        if last && !hit {
            for v in [home[axis] - k, home[axis] + k] {
                if v >= lo && v <= hi {
                    cell[axis] = v;
                    self.ring_rec(home, k, axis + 1, true, cell, any, f);
                }
                if k == 0 {
                    break;
                }
            }
            return;
        }
        for v in lo..=hi {
            cell[axis] = v;
            let h = hit || (v - home[axis]).abs() == k;
            self.ring_rec(home, k, axis + 1, h, cell, any, f);
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    pub(crate) fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
        true
    }
}

/// Connected components of overlapping closed balls.
///
/// Cluster ids are dense and ordered by the smallest member index, so the
/// labelling is a deterministic function of the configuration.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    config: PointConfiguration,
    index: SpatialIndex,
    cluster_of: Vec<u32>,
    member_start: Vec<u32>,
    members: Vec<u32>,
    bbox_lo: Vec<f64>,
    bbox_hi: Vec<f64>,
}

/// Builds the spatial index of a configuration.
pub fn build_index(config: &PointConfiguration) -> SpatialIndex {
    SpatialIndex::build(config)
}

/// Union-find over all pairs with `|c_i - c_j| ≤ 2·radius`.
pub fn find_clusters(config: &PointConfiguration) -> ClusterSet {
    let index = SpatialIndex::build(config);
    let n = config.len();
    let mut uf = UnionFind::new(n);
    let reach = 2.0 * config.radius();
    for i in 0..n {
        index.for_each_within(config, config.center(i), reach, |j| {
            if j > i {
                uf.union(i as u32, j as u32);
            }
        });
    }
    let mut label = vec![u32::MAX; n];
    let mut cluster_of = vec![0u32; n];
    let mut nclusters = 0u32;
    for i in 0..n {
        let r = uf.find(i as u32) as usize;
        if label[r] == u32::MAX {
            label[r] = nclusters;
            nclusters += 1;
        }
        cluster_of[i] = label[r];
    }
    let nc = nclusters as usize;
    let mut member_start = vec![0u32; nc + 1];
    for &c in &cluster_of {
        member_start[c as usize + 1] += 1;
    }
    for c in 0..nc {
        member_start[c + 1] += member_start[c];
    }
    let mut fill = member_start.clone();
    let mut members = vec![0u32; n];
    for (i, &c) in cluster_of.iter().enumerate() {
        members[fill[c as usize] as usize] = i as u32;
        fill[c as usize] += 1;
    }
    let d = config.dim();
    let mut bbox_lo = vec![f64::INFINITY; nc * d];
    let mut bbox_hi = vec![f64::NEG_INFINITY; nc * d];
    for (i, &c) in cluster_of.iter().enumerate() {
        let p = config.center(i);
        for k in 0..d {
            let s = c as usize * d + k;
            bbox_lo[s] = bbox_lo[s].min(p[k]);
            bbox_hi[s] = bbox_hi[s].max(p[k]);
        }
    }
    ClusterSet {
        config: config.clone(),
        index,
        cluster_of,
        member_start,
        members,
        bbox_lo,
        bbox_hi,
    }
}

impl ClusterSet {
    pub fn config(&self) -> &PointConfiguration {
        &self.config
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub fn radius(&self) -> f64 {
        self.config.radius()
    }

    pub fn len(&self) -> usize {
        self.member_start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cluster containing ball `ball`.
    #[inline]
    pub fn cluster_of(&self, ball: usize) -> usize {
        self.cluster_of[ball] as usize
    }

    /// Ball indices of cluster `id` (unchecked id).
    #[inline]
    pub fn members(&self, id: usize) -> &[u32] {
        &self.members[self.member_start[id] as usize..self.member_start[id + 1] as usize]
    }

    fn check(&self, id: usize) -> Result<()> {
        if id >= self.len() {
            return Err(Error::NotFound(format!("cluster {id} (have {})", self.len())));
        }
        Ok(())
    }

    /// Bounding box of the member centers.
    pub fn bbox(&self, id: usize) -> Result<(&[f64], &[f64])> {
        self.check(id)?;
        let d = self.config.dim();
        Ok((&self.bbox_lo[id * d..(id + 1) * d], &self.bbox_hi[id * d..(id + 1) * d]))
    }

    fn bbox_unchecked(&self, id: usize) -> (&[f64], &[f64]) {
        let d = self.config.dim();
        (&self.bbox_lo[id * d..(id + 1) * d], &self.bbox_hi[id * d..(id + 1) * d])
    }

    /// Ball indices whose closed ball contains `p`.
    pub fn balls_containing(&self, p: &[f64]) -> Vec<usize> {
        let mut out = Vec::new();
        self.index
            .for_each_within(&self.config, p, self.config.radius(), |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Euclidean diameter of the component: max member-pair distance plus
    /// one ball diameter.
    pub fn diameter(&self, id: usize) -> Result<f64> {
        self.check(id)?;
        let m = self.members(id);
        let (lo, hi) = self.bbox_unchecked(id);
        let mut best = 0.0f64;
        for (a, &i) in m.iter().enumerate() {
            let ci = self.config.center(i as usize);
            // farthest bbox corner bounds every partner of ci
            let ub2: f64 = ci
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| {
                    let e = (v - l).abs().max((h - v).abs());
                    e * e
                })
                .sum();
            if ub2 <= best * best {
                continue;
            }
            for &j in &m[a + 1..] {
                best = best.max(dist(ci, self.config.center(j as usize)));
            }
        }
        Ok(best + 2.0 * self.config.radius())
    }

    /// Gap between two distinct components:
    /// `max(0, min_{i ∈ a, j ∈ b} |c_i - c_j| - 2r)`.
    pub fn set_distance(&self, a: usize, b: usize) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(Error::invalid("cluster", "set distance needs two distinct clusters"));
        }
        let (blo, bhi) = self.bbox_unchecked(b);
        let bbox_b = crate::model::BoxRegion {
            lo: blo.to_vec(),
            hi: bhi.to_vec(),
        };
        let mut best = f64::INFINITY;
        for &i in self.members(a) {
            let ci = self.config.center(i as usize);
            if bbox_b.distance_to(ci) >= best {
                continue;
            }
            for &j in self.members(b) {
                best = best.min(dist(ci, self.config.center(j as usize)));
            }
        }
        Ok((best - 2.0 * self.config.radius()).max(0.0))
    }

    /// Gap from a free point to a component: `max(0, min_i |p - c_i| - r)`.
    pub fn point_distance(&self, p: &[f64], id: usize) -> Result<f64> {
        self.check(id)?;
        crate::model::check_dim(p, self.config.dim(), "point")?;
        let best = self
            .members(id)
            .iter()
            .map(|&i| dist(p, self.config.center(i as usize)))
            .fold(f64::INFINITY, f64::min);
        Ok((best - self.config.radius()).max(0.0))
    }

    /// Partition as sorted member lists, sorted by first member.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        (0..self.len())
            .map(|c| {
                let mut v: Vec<usize> = self.members(c).iter().map(|&i| i as usize).collect();
                v.sort_unstable();
                v
            })
            .collect()
    }

    /// CSV summary: `cluster_id,size,diameter,lo_0..lo_{d-1},hi_0..hi_{d-1}`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.config.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["cluster_id".to_string(), "size".into(), "diameter".into()];
        header.extend((0..d).map(|k| format!("lo_{k}")));
        header.extend((0..d).map(|k| format!("hi_{k}")));
        w.write_record(&header)?;
        for c in 0..self.len() {
            let (lo, hi) = self.bbox_unchecked(c);
            let mut row = vec![c.to_string(), self.members(c).len().to_string(), self.diameter(c)?.to_string()];
            row.extend(lo.iter().map(|v| v.to_string()));
            row.extend(hi.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Free-function forms of the cluster queries.
pub fn cluster_diameter(cs: &ClusterSet, id: usize) -> Result<f64> {
    cs.diameter(id)
}

pub fn cluster_set_distance(cs: &ClusterSet, a: usize, b: usize) -> Result<f64> {
    cs.set_distance(a, b)
}

pub fn point_cluster_distance(cs: &ClusterSet, p: &[f64], id: usize) -> Result<f64> {
    cs.point_distance(p, id)
}
