//! Limit quantities: the volume coefficient `σ`, the upper bound on the
//! metric coefficient `η`, empirical `η` tables and a grid solver for
//! distances in a conformal metric `ρ(x)·e`.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::HeapItem;
use crate::model::{check_dim, dist, kappa, Domain};

fn check_args(u: f64, xi: f64, d: usize) -> Result<f64> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::invalid("u", "intensity must be finite and nonnegative"));
    }
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::invalid("xi", "dilatation factor must lie in [0, 1)"));
    }
    if d < 2 {
        return Err(Error::invalid("d", "dimension must be at least 2"));
    }
    Ok((-u * kappa(d)?).exp())
}

/// Volume coefficient `σ(u) = (e^{-uκ_d} + ξ^d (1 - e^{-uκ_d}))^{1/d}`.
pub fn sigma(u: f64, xi: f64, d: usize) -> Result<f64> {
    let v = check_args(u, xi, d)?;
    Ok((v + xi.powi(d as i32) * (1.0 - v)).powf(1.0 / d as f64))
}

/// Upper bound `e^{-uκ_d} + ξ (1 - e^{-uκ_d})` on the metric coefficient.
pub fn eta_upper_bound(u: f64, xi: f64, d: usize) -> Result<f64> {
    let v = check_args(u, xi, d)?;
    Ok(v + xi * (1.0 - v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEntry {
    pub u: f64,
    pub eta: f64,
    #[serde(default)]
    pub stderr: f64,
}

/// Empirical `η(u)` on a grid of intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaTable {
    pub d: usize,
    pub xi: f64,
    pub entries: Vec<EtaEntry>,
    /// Scale at which the entries were estimated.
    #[serde(rename = "R")]
    pub scale: f64,
    pub replicas: usize,
}

impl EtaTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: EtaTable = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::invalid("d", "dimension must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.xi) {
            return Err(Error::invalid("xi", "dilatation factor must lie in [0, 1)"));
        }
        if !(self.scale > 0.0) {
            return Err(Error::invalid("R", "scale must be positive"));
        }
        let e = &self.entries;
        if !e.iter().any(|x| x.u == 0.0 && x.eta == 1.0) {
            return Err(Error::invalid("entries", "the entry u = 0, eta = 1 is required"));
        }
        for (i, x) in e.iter().enumerate() {
            if !(x.u >= 0.0 && x.u.is_finite()) {
                return Err(Error::invalid(format!("entries[{i}].u"), "must be finite and nonnegative"));
            }
            if !(x.eta > 0.0 && x.eta <= 1.0) {
                return Err(Error::invalid(format!("entries[{i}].eta"), "must lie in (0, 1]"));
            }
            if !(x.stderr >= 0.0 && x.stderr.is_finite()) {
                return Err(Error::invalid(format!("entries[{i}].stderr"), "must be finite and nonnegative"));
            }
        }
        for (i, w) in e.windows(2).enumerate() {
            if w[1].u <= w[0].u {
                return Err(Error::invalid(format!("entries[{}].u", i + 1), "u grid must be strictly increasing"));
            }
            let tol = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            if w[1].eta > w[0].eta + tol {
                return Err(Error::invalid(
                    format!("entries[{}].eta", i + 1),
                    format!("increases by {} beyond twice the combined stderr", w[1].eta - w[0].eta),
                ));
            }
        }
        Ok(())
    }

    /// Combines two tables of the same `d`, `xi` and scale. Entries at a
    /// shared `u` are pooled by inverse-variance weights.
    pub fn merge(&self, other: &EtaTable) -> Result<EtaTable> {
        if self.d != other.d || self.xi != other.xi {
            return Err(Error::invalid("table", "d and xi must agree"));
        }
        if self.scale != other.scale {
            return Err(Error::invalid("R", "tables estimated at different scales cannot be pooled"));
        }
        let mut all: Vec<EtaEntry> = self.entries.iter().chain(&other.entries).copied().collect();
        all.sort_by(|a, b| a.u.total_cmp(&b.u));
        let mut out: Vec<EtaEntry> = Vec::new();
        for e in all {
            match out.last_mut() {
                Some(last) if last.u == e.u => *last = pool(*last, e),
                _ => out.push(e),
            }
        }
        let t = EtaTable {
            d: self.d,
            xi: self.xi,
            entries: out,
            scale: self.scale,
            replicas: self.replicas + other.replicas,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn u_range(&self) -> (f64, f64) {
        (self.entries[0].u, self.entries[self.entries.len() - 1].u)
    }
}

fn pool(a: EtaEntry, b: EtaEntry) -> EtaEntry {
    if a.stderr == 0.0 || b.stderr == 0.0 {
        // a zero-variance entry is exact (u = 0)
        return if a.stderr == 0.0 { a } else { b };
    }
    let (wa, wb) = (1.0 / a.stderr.powi(2), 1.0 / b.stderr.powi(2));
    EtaEntry {
        u: a.u,
        eta: (wa * a.eta + wb * b.eta) / (wa + wb),
        stderr: (1.0 / (wa + wb)).sqrt(),
    }
}

/// Nonincreasing least-squares fit (pool adjacent violators).
fn antitone(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if b <= a {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    blocks.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n)).collect()
}

/// `η(u)` by monotone piecewise-linear interpolation.
///
/// Table values are first made nonincreasing (they already are for a
/// validated table up to noise) and the result is clamped to `[min, 1]`.
pub fn eta_lookup(table: &EtaTable, u: f64) -> Result<f64> {
    let (lo, hi) = table.u_range();
    if !(u >= lo && u <= hi) {
        return Err(Error::OutOfDomain(format!("u = {u} outside the table range [{lo}, {hi}]")));
    }
    let us: Vec<f64> = table.entries.iter().map(|e| e.u).collect();
    let fit = antitone(&table.entries.iter().map(|e| e.eta).collect::<Vec<_>>());
    let i = us.partition_point(|&x| x <= u);
    let v = if i == 0 {
        fit[0]
    } else if i == us.len() {
        fit[us.len() - 1]
    } else {
        let t = (u - us[i - 1]) / (us[i] - us[i - 1]);
        fit[i - 1] + t * (fit[i] - fit[i - 1])
    };
    let min = fit.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(v.clamp(min, 1.0))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive integer steps with max-norm at most `radius`.
fn stencil(d: usize, radius: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let side = 2 * radius + 1;
    let total = (side as usize).pow(d as u32);
    for code in 0..total {
        let mut c = code as i64;
        let v: Vec<i64> = (0..d)
            .map(|_| {
                let x = c % side - radius;
                c /= side;
                x
            })
            .collect();
        let g = v.iter().fold(0, |g, &x| gcd(g, x));
        if g == 1 {
            out.push(v);
        }
    }
    out
}

/// Largest relative overestimate of straight-line length by planar stencil
/// paths, maximized over directions.
pub fn stencil_anisotropy(radius: i64) -> f64 {
    let mut dirs: Vec<(f64, f64, f64)> = stencil(2, radius)
        .iter()
        .map(|v| {
            let (x, y) = (v[0] as f64, v[1] as f64);
            (y.atan2(x), x, y)
        })
        .collect();
    dirs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut worst = 0.0f64;
    for i in 0..dirs.len() {
        let (a0, ax, ay) = dirs[i];
        let (b0, bx, by) = dirs[(i + 1) % dirs.len()];
        let span = (b0 - a0).rem_euclid(std::f64::consts::TAU);
        for s in 0..=64 {
            let th = a0 + span * s as f64 / 64.0;
            let (tx, ty) = (th.cos(), th.sin());
            // unit direction as α a + β b with α, β ≥ 0
            let det = ax * by - ay * bx;
            let alpha = (tx * by - ty * bx) / det;
            let beta = (ax * ty - ay * tx) / det;
            let cost = alpha * (ax * ax + ay * ay).sqrt() + beta * (bx * bx + by * by).sqrt();
            worst = worst.max(cost - 1.0);
        }
    }
    worst
}

/// Default stencil radius: 80 neighbors in the plane, 98 in space.
pub fn default_stencil_radius(d: usize) -> i64 {
    if d == 2 {
        5
    } else {
        2
    }
}

/// A grid over a domain carrying a positive conformal factor `ρ`.
///
/// Distances are shortest paths over a wide stencil with edge weight
/// `|step| · (ρ(a) + ρ(b)) / 2`. In the plane the default stencil
/// overestimates straight lengths by at most [`stencil_anisotropy`]`(5)`
/// (about 0.5%), plus an `O(h · Lip(ρ))` term.
#[derive(Debug, Clone)]
pub struct ConformalGrid {
    domain: Domain,
    h: f64,
    origin: Vec<f64>,
    shape: Vec<i64>,
    rho: Vec<f64>,
    inside: Vec<bool>,
    steps: Vec<(Vec<i64>, f64)>,
}

impl ConformalGrid {
    pub fn new(domain: &Domain, h: f64, rho: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::with_stencil(domain, h, default_stencil_radius(domain.dim()), rho)
    }

    pub fn with_stencil(domain: &Domain, h: f64, radius: i64, rho: impl Fn(&[f64]) -> f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("h", "grid spacing must be positive"));
        }
        if radius < 1 {
            return Err(Error::invalid("radius", "stencil radius must be at least 1"));
        }
        let d = domain.dim();
        let bb = domain.bounding_box();
        let shape: Vec<i64> = (0..d).map(|k| (bb.side(k) / h + 1e-9).floor() as i64 + 1).collect();
        let n: i64 = shape.iter().product();
        if n > 50_000_000 {
            return Err(Error::invalid("h", "grid too fine"));
        }
        let mut g = ConformalGrid {
            domain: domain.clone(),
            h,
            origin: bb.lo.clone(),
            shape,
            rho: vec![0.0; n as usize],
            inside: vec![false; n as usize],
            steps: stencil(d, radius)
                .into_iter()
                .map(|v| {
                    let l = v.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
                    (v, l * h)
                })
                .collect(),
        };
        let mut p = vec![0.0; d];
        for i in 0..n as usize {
            g.position(i, &mut p);
            if domain.contains_point(&p) {
                let r = rho(&p);
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::invalid("rho", format!("conformal factor must be positive, got {r}")));
                }
                g.inside[i] = true;
                g.rho[i] = r;
            }
        }
        Ok(g)
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// The same grid with `ρ` multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid("factor", "must be positive"));
        }
        let mut g = self.clone();
        for r in g.rho.iter_mut() {
            *r *= factor;
        }
        Ok(g)
    }

    fn index(&self, cell: &[i64]) -> Option<usize> {
        let mut f = 0i64;
        for k in (0..cell.len()).rev() {
            if cell[k] < 0 || cell[k] >= self.shape[k] {
                return None;
            }
            f = f * self.shape[k] + cell[k];
        }
        Some(f as usize)
    }

    fn cell(&self, mut i: usize, out: &mut [i64]) {
        for k in 0..self.shape.len() {
            out[k] = i as i64 % self.shape[k];
            i /= self.shape[k] as usize;
        }
    }

    fn position(&self, i: usize, out: &mut [f64]) {
        let mut c = vec![0; self.shape.len()];
        self.cell(i, &mut c);
        for k in 0..c.len() {
            out[k] = self.origin[k] + c[k] as f64 * self.h;
        }
    }

    /// Nearest grid node inside the domain.
    fn snap(&self, p: &[f64], what: &str) -> Result<usize> {
        check_dim(p, self.shape.len(), what)?;
        if !self.domain.contains_point(p) {
            return Err(Error::invalid(what, "point lies outside the domain"));
        }
        let base: Vec<i64> = (0..p.len())
            .map(|k| ((p[k] - self.origin[k]) / self.h).round() as i64)
            .collect();
        let mut best: Option<(f64, usize)> = None;
        let mut q = vec![0.0; p.len()];
        for reach in 0..4i64 {
            let side = 2 * reach + 1;
            let total = (side as usize).pow(p.len() as u32);
            for code in 0..total {
                let mut c = code as i64;
                let cell: Vec<i64> = base
                    .iter()
                    .map(|b| {
                        let x = b + c % side - reach;
                        c /= side;
                        x
                    })
                    .collect();
                if let Some(i) = self.index(&cell) {
                    if self.inside[i] {
                        self.position(i, &mut q);
                        let e = dist(p, &q);
                        if best.is_none_or(|(b, _)| e < b) {
                            best = Some((e, i));
                        }
                    }
                }
            }
            if let Some((_, i)) = best {
                return Ok(i);
            }
        }
        Err(Error::invalid(what, "no grid node near the point; refine the grid"))
    }

    /// Grid distances from `x` to each of `ys`.
    pub fn distances_from<P: AsRef<[f64]>>(&self, x: &[f64], ys: &[P]) -> Result<Vec<f64>> {
        let src = self.snap(x, "x")?;
        let targets: Vec<usize> = ys
            .iter()
            .map(|y| self.snap(y.as_ref(), "y"))
            .collect::<Result<_>>()?;
        let n = self.rho.len();
        let d = self.shape.len();
        let mut best = vec![f64::INFINITY; n];
        let mut is_target = vec![false; n];
        for &t in &targets {
            is_target[t] = true;
        }
        let mut remaining = is_target.iter().filter(|&&b| b).count();
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[src] = 0.0;
        heap.push(HeapItem { key: 0.0, node: src as u32 });
        let convex = self.domain.is_convex();
        let mut cell = vec![0i64; d];
        let mut nb = vec![0i64; d];
        let (mut pa, mut pb) = (vec![0.0; d], vec![0.0; d]);
        while let Some(HeapItem { key, node }) = heap.pop() {
            let v = node as usize;
            if done[v] || key > best[v] {
                continue;
            }
            done[v] = true;
            if is_target[v] {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            self.cell(v, &mut cell);
            for (step, len) in &self.steps {
                for k in 0..d {
                    nb[k] = cell[k] + step[k];
                }
                let Some(u) = self.index(&nb) else { continue };
                if done[u] || !self.inside[u] {
                    continue;
                }
                let nd = key + len * 0.5 * (self.rho[v] + self.rho[u]);
                if nd < best[u] {
                    if !convex {
                        self.position(v, &mut pa);
                        self.position(u, &mut pb);
                        if !self.domain.segment_inside(&pa, &pb) {
                            continue;
                        }
                    }
                    best[u] = nd;
                    heap.push(HeapItem { key: nd, node: u as u32 });
                }
            }
        }
        targets
            .iter()
            .map(|&t| {
                if best[t].is_finite() {
                    Ok(best[t])
                } else {
                    Err(Error::NotFound("target not reachable on the grid".into()))
                }
            })
            .collect()
    }
}

/// Conformal distance between two points of the grid's domain.
pub fn conformal_distance(grid: &ConformalGrid, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(grid.distances_from(x, &[y])?[0])
}
