//! Domain types shared by every other module: points and defect
//! configurations, simulation domains, defect intensity fields and the
//! unit-ball volume constant.
//!
//! Geometry is expressed in rescaled coordinates (defect balls of radius 1,
//! intensity `u`) unless a configuration says otherwise. The unscaled picture
//! at scale `R` (balls of radius `1/R`, intensity `R^d u`) is recovered with
//! `dist_R(x, y) = dist(R x, R y) / R`, see [`SimParams`].

use std::f64::consts::PI;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volume of the `d`-dimensional Euclidean unit ball, `π^{d/2} / Γ(d/2 + 1)`.
pub fn kappa(d: usize) -> Result<f64> {
    if d < 1 {
        return Err(Error::invalid("d", "dimension must be at least 1"));
    }
    // κ_d = (2π / d) κ_{d-2}, seeded with κ_0 = 1 and κ_1 = 2.
    let mut k = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut m = if d % 2 == 0 { 2 } else { 3 };
    while m <= d {
        k *= 2.0 * PI / m as f64;
        m += 2;
    }
    Ok(k)
}

/// Conservative default for the subcritical threshold `u*` in rescaled units.
///
/// The threshold has no closed form; these values sit below the empirical
/// Boolean-model thresholds for unit balls (d=2: ≈0.36, d=3: ≈0.082).
pub fn default_u_star(d: usize) -> Option<f64> {
    match d {
        2 => Some(0.35),
        3 => Some(0.08),
        _ => None,
    }
}

/// Dimension, dilatation factor and scale factor of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub d: usize,
    #[serde(default)]
    pub xi: f64,
    /// Scale factor: defect radius is `1/R` in the unscaled picture.
    #[serde(rename = "R", default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl SimParams {
    pub fn new(d: usize, xi: f64, scale: f64) -> Result<Self> {
        let p = SimParams { d, xi, scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::invalid("d", "dimension must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.xi) {
            return Err(Error::invalid("xi", "dilatation factor must lie in [0, 1)"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("R", "scale factor must be positive and finite"));
        }
        Ok(())
    }

    /// Defect radius in the unscaled picture.
    pub fn unscaled_radius(&self) -> f64 {
        1.0 / self.scale
    }

    /// Maps an unscaled point to rescaled coordinates (`x ↦ R x`).
    pub fn to_rescaled(&self, p: &[f64]) -> Point {
        Point(p.iter().map(|v| v * self.scale).collect())
    }

    /// Converts a rescaled distance to the unscaled picture.
    pub fn to_unscaled_distance(&self, rescaled: f64) -> f64 {
        rescaled / self.scale
    }
}

/// A point of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn origin(d: usize) -> Self {
        Point(vec![0.0; d])
    }

    /// `t` times the `axis`-th unit vector.
    pub fn on_axis(d: usize, axis: usize, t: f64) -> Self {
        let mut v = vec![0.0; d];
        v[axis] = t;
        Point(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub(crate) fn check_dim(p: &[f64], d: usize, what: &str) -> Result<()> {
    if p.len() != d {
        return Err(Error::invalid(
            what,
            format!("expected {d} coordinates, got {}", p.len()),
        ));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(what, "coordinates must be finite"));
    }
    Ok(())
}

/// Axis-aligned closed box `[lo_0, hi_0] × … × [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid("box", "lower and upper corners must have equal, nonzero dimension"));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::invalid("box", "every side needs finite lo < hi"));
            }
        }
        Ok(BoxRegion { lo, hi })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.side(k)).product()
    }

    pub fn diameter(&self) -> f64 {
        dist(&self.lo, &self.hi)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn expanded(&self, margin: f64) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().map(|v| v - margin).collect(),
            hi: self.hi.iter().map(|v| v + margin).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().map(|v| v * factor).collect(),
            hi: self.hi.iter().map(|v| v * factor).collect(),
        }
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| {
                let e = if v < a { a - v } else if v > b { v - b } else { 0.0 };
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Parameter interval `[t0, t1] ⊂ [0, 1]` of `a + t (b - a)` inside the box.
    pub(crate) fn clip_segment(&self, a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..self.dim() {
            let dk = b[k] - a[k];
            if dk == 0.0 {
                if a[k] < self.lo[k] || a[k] > self.hi[k] {
                    return None;
                }
                continue;
            }
            let (mut s0, mut s1) = ((self.lo[k] - a[k]) / dk, (self.hi[k] - a[k]) / dk);
            if s0 > s1 {
                std::mem::swap(&mut s0, &mut s1);
            }
            t0 = t0.max(s0);
            t1 = t1.min(s1);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] })
                    .collect()
            })
            .collect()
    }
}

/// A finite realization of defect centers with a common ball radius.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfiguration {
    dim: usize,
    radius: f64,
    coords: Vec<f64>,
}

impl PointConfiguration {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "dimension must be positive"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", "radius must be positive and finite"));
        }
        Ok(PointConfiguration {
            dim,
            radius,
            coords: Vec::new(),
        })
    }

    pub fn from_centers<P: AsRef<[f64]>>(dim: usize, radius: f64, centers: &[P]) -> Result<Self> {
        let mut c = Self::new(dim, radius)?;
        for p in centers {
            c.push(p.as_ref())?;
        }
        Ok(c)
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        check_dim(p, self.dim, "center")?;
        self.coords.extend_from_slice(p);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, p: &[f64]) {
        self.coords.extend_from_slice(p);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn center(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Keeps the centers for which `keep` returns true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&[f64]) -> bool) -> PointConfiguration {
        let mut out = PointConfiguration {
            dim: self.dim,
            radius: self.radius,
            coords: Vec::new(),
        };
        for c in self.centers() {
            if keep(c) {
                out.coords.extend_from_slice(c);
            }
        }
        out
    }

    /// Multiplies every coordinate and the radius by `factor`.
    pub fn scaled(&self, factor: f64) -> PointConfiguration {
        PointConfiguration {
            dim: self.dim,
            radius: self.radius * factor,
            coords: self.coords.iter().map(|v| v * factor).collect(),
        }
    }

    /// True when `p` lies in the closed union of balls.
    pub fn covers(&self, p: &[f64]) -> bool {
        let r2 = self.radius * self.radius;
        self.centers().any(|c| dist2(c, p) <= r2)
    }
}

/// Defect centers carrying intensity marks in `[0, mark_max)`.
///
/// Restricting at a level field `u` keeps the centers whose mark is at most
/// `u(center)`; supports are nested in `u` on every realization.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedConfiguration {
    pub(crate) points: PointConfiguration,
    pub(crate) marks: Vec<f64>,
    pub(crate) mark_max: f64,
}

impl MarkedConfiguration {
    pub fn new(points: PointConfiguration, marks: Vec<f64>, mark_max: f64) -> Result<Self> {
        if marks.len() != points.len() {
            return Err(Error::invalid("marks", "one mark per center is required"));
        }
        if !(mark_max > 0.0) {
            return Err(Error::invalid("mark_max", "mark range must be positive"));
        }
        if marks.iter().any(|m| !(*m >= 0.0 && *m < mark_max)) {
            return Err(Error::invalid("marks", "marks must lie in [0, mark_max)"));
        }
        Ok(MarkedConfiguration {
            points,
            marks,
            mark_max,
        })
    }

    pub fn points(&self) -> &PointConfiguration {
        &self.points
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn mark_max(&self) -> f64 {
        self.mark_max
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    Box(BoxRegion),
    /// Bounded convex polytope `{x : n_i · x ≤ b_i}`, with its vertices.
    Polytope {
        halfspaces: Vec<HalfSpace>,
        vertices: Vec<Vec<f64>>,
    },
    /// Finite union of axis-aligned boxes.
    BoxUnion(Vec<BoxRegion>),
}

/// A compact simulation domain: a box, a convex polytope, or a union of boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    bbox: BoxRegion,
    diameter: f64,
}

const POLY_EPS: f64 = 1e-9;

impl Domain {
    pub fn from_box(b: BoxRegion) -> Domain {
        let diameter = b.diameter();
        Domain {
            bbox: b.clone(),
            kind: DomainKind::Box(b),
            diameter,
        }
    }

    pub fn union_of_boxes(boxes: Vec<BoxRegion>) -> Result<Domain> {
        let first = boxes
            .first()
            .ok_or_else(|| Error::invalid("union", "at least one box is required"))?;
        let d = first.dim();
        if boxes.iter().any(|b| b.dim() != d) {
            return Err(Error::invalid("union", "boxes must share a dimension"));
        }
        let lo = (0..d)
            .map(|k| boxes.iter().map(|b| b.lo[k]).fold(f64::INFINITY, f64::min))
            .collect();
        let hi = (0..d)
            .map(|k| boxes.iter().map(|b| b.hi[k]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let corners: Vec<Vec<f64>> = boxes.iter().flat_map(|b| b.corners()).collect();
        let diameter = max_pair_distance(&corners);
        Ok(Domain {
            kind: DomainKind::BoxUnion(boxes),
            bbox: BoxRegion { lo, hi },
            diameter,
        })
    }

    /// Builds a bounded polytope from half-spaces `normal · x ≤ offset`.
    pub fn polytope(halfspaces: Vec<HalfSpace>) -> Result<Domain> {
        let d = halfspaces
            .first()
            .map(|h| h.normal.len())
            .ok_or_else(|| Error::invalid("polytope", "no half-spaces given"))?;
        if d == 0 || halfspaces.iter().any(|h| h.normal.len() != d) {
            return Err(Error::invalid("polytope", "half-space normals must share a positive dimension"));
        }
        let vertices = polytope_vertices(&halfspaces, d);
        if vertices.len() < d + 1 {
            return Err(Error::invalid("polytope", "half-spaces do not bound a full-dimensional region"));
        }
        let lo: Vec<f64> = (0..d)
            .map(|k| vertices.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min))
            .collect();
        let hi: Vec<f64> = (0..d)
            .map(|k| vertices.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let bbox = BoxRegion::new(lo, hi)
            .map_err(|_| Error::invalid("polytope", "polytope has empty interior"))?;
        // Unbounded directions would leave vertices strictly inside the hull of
        // the bounding box; probe the box corners just outside.
        let probe = bbox.expanded(1.0 + bbox.diameter());
        let inside = |p: &[f64]| {
            halfspaces
                .iter()
                .all(|h| h.normal.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() <= h.offset + POLY_EPS)
        };
        if probe.corners().iter().any(|c| inside(c)) {
            return Err(Error::invalid("polytope", "half-spaces do not bound the region"));
        }
        let diameter = max_pair_distance(&vertices);
        Ok(Domain {
            kind: DomainKind::Polytope { halfspaces, vertices },
            bbox,
            diameter,
        })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn bounding_box(&self) -> &BoxRegion {
        &self.bbox
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn is_convex(&self) -> bool {
        match &self.kind {
            DomainKind::Box(_) | DomainKind::Polytope { .. } => true,
            DomainKind::BoxUnion(b) => b.len() == 1,
        }
    }

    /// Closed-set membership; errors on dimension mismatch.
    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        if p.len() != self.dim() {
            return Err(Error::invalid(
                "point",
                format!("domain has dimension {}, point has {}", self.dim(), p.len()),
            ));
        }
        Ok(self.contains_point(p))
    }

    pub(crate) fn contains_point(&self, p: &[f64]) -> bool {
        match &self.kind {
            DomainKind::Box(b) => b.contains(p),
            DomainKind::Polytope { halfspaces, .. } => halfspaces
                .iter()
                .all(|h| h.normal.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() <= h.offset),
            DomainKind::BoxUnion(bs) => bs.iter().any(|b| b.contains(p)),
        }
    }

    /// True when the closed segment `[a, b]` lies inside the domain.
    pub fn segment_inside(&self, a: &[f64], b: &[f64]) -> bool {
        match &self.kind {
            DomainKind::Box(_) | DomainKind::Polytope { .. } => {
                self.contains_point(a) && self.contains_point(b)
            }
            DomainKind::BoxUnion(bs) => {
                let mut iv: Vec<(f64, f64)> =
                    bs.iter().filter_map(|bx| bx.clip_segment(a, b)).collect();
                iv.sort_by(|x, y| x.0.total_cmp(&y.0));
                let mut reach = 0.0f64;
                for (s, e) in iv {
                    if s > reach + 1e-12 {
                        return false;
                    }
                    reach = reach.max(e);
                }
                reach >= 1.0 - 1e-12
            }
        }
    }

    /// True when the closed ball `B(c, r)` meets the boundary of the domain.
    pub fn ball_meets_boundary(&self, c: &[f64], r: f64) -> bool {
        match &self.kind {
            DomainKind::Box(b) => {
                if b.contains(c) {
                    (0..b.dim()).any(|k| c[k] - b.lo[k] <= r || b.hi[k] - c[k] <= r)
                } else {
                    b.distance_to(c) <= r
                }
            }
            DomainKind::Polytope { halfspaces, .. } => {
                let slack = halfspaces
                    .iter()
                    .map(|h| {
                        let n = h.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                        (h.offset - h.normal.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()) / n
                    })
                    .fold(f64::INFINITY, f64::min);
                // Outside: slack is minus a lower bound of the true distance.
                slack.abs() <= r || (slack < 0.0 && -slack <= r)
            }
            DomainKind::BoxUnion(_) => {
                let inside = self.contains_point(c);
                let d = c.len();
                let mut p = c.to_vec();
                for k in 0..d {
                    for s in [-1.0, 1.0] {
                        p[k] = c[k] + s * r;
                        if self.contains_point(&p) != inside {
                            return true;
                        }
                        p[k] = c[k];
                    }
                }
                if d == 2 {
                    for j in 0..16 {
                        let a = j as f64 * PI / 8.0;
                        let q = [c[0] + r * a.cos(), c[1] + r * a.sin()];
                        if self.contains_point(&q) != inside {
                            return true;
                        }
                    }
                }
                false
            }
        }
    }

    /// Reflex vertices of a planar union of boxes (where shortest paths bend).
    pub fn reflex_corners(&self) -> Vec<Point> {
        let DomainKind::BoxUnion(bs) = &self.kind else {
            return Vec::new();
        };
        if self.dim() != 2 {
            return Vec::new();
        }
        let eps = 1e-7 * self.diameter.max(1.0);
        let mut xs: Vec<f64> = bs.iter().flat_map(|b| [b.lo[0], b.hi[0]]).collect();
        let mut ys: Vec<f64> = bs.iter().flat_map(|b| [b.lo[1], b.hi[1]]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        // reflex vertices can sit where edges of different boxes cross
        let mut out: Vec<Point> = Vec::new();
        for &x in &xs {
            for &y in &ys {
                let c = vec![x, y];
                let inside = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
                    .iter()
                    .filter(|(sx, sy)| self.contains_point(&[c[0] + sx * eps, c[1] + sy * eps]))
                    .count();
                if inside == 3 && !out.iter().any(|q| dist(q, &c) < eps) {
                    out.push(Point(c));
                }
            }
        }
        out
    }

    /// The image of the domain under `x ↦ factor · x`.
    pub fn scaled(&self, factor: f64) -> Domain {
        match &self.kind {
            DomainKind::Box(b) => Domain::from_box(b.scaled(factor)),
            DomainKind::BoxUnion(bs) => {
                Domain::union_of_boxes(bs.iter().map(|b| b.scaled(factor)).collect())
                    .expect("scaling preserves validity")
            }
            DomainKind::Polytope { halfspaces, vertices } => Domain {
                kind: DomainKind::Polytope {
                    halfspaces: halfspaces
                        .iter()
                        .map(|h| HalfSpace {
                            normal: h.normal.clone(),
                            offset: h.offset * factor,
                        })
                        .collect(),
                    vertices: vertices
                        .iter()
                        .map(|v| v.iter().map(|x| x * factor).collect())
                        .collect(),
                },
                bbox: self.bbox.scaled(factor),
                diameter: self.diameter * factor,
            },
        }
    }
}

fn max_pair_distance(pts: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.max(dist(&pts[i], &pts[j]));
        }
    }
    best
}

/// Vertex enumeration: solve every `d`-subset of constraints as equalities
/// and keep the feasible solutions.
fn polytope_vertices(hs: &[HalfSpace], d: usize) -> Vec<Vec<f64>> {
    let m = hs.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..d).collect();
    if m < d {
        return out;
    }
    loop {
        let mut a: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let mut row = hs[i].normal.clone();
                row.push(hs[i].offset);
                row
            })
            .collect();
        if let Some(x) = solve_dense(&mut a, d) {
            let feasible = hs.iter().all(|h| {
                h.normal.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= h.offset + POLY_EPS
            });
            if feasible && !out.iter().any(|v| dist(v, &x) < 1e-9) {
                out.push(x);
            }
        }
        // next combination
        let mut k = d;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] < m - d + k {
                idx[k] += 1;
                for j in k + 1..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_dense(a: &mut [Vec<f64>], d: usize) -> Option<Vec<f64>> {
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=d {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..d).map(|r| a[r][d] / a[r][r]).collect())
}

/// Regular grid samples of an intensity, interpolated multilinearly.
///
/// `values` are stored in row-major order, last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Constant(f64),
    Grid(GridField),
}

/// Defect intensity `u(x)` in rescaled units.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityField {
    kind: FieldKind,
    sup_value: f64,
}

impl IntensityField {
    pub fn constant(u: f64) -> Result<Self> {
        if !(u >= 0.0 && u.is_finite()) {
            return Err(Error::invalid("intensity", "constant intensity must be finite and nonnegative"));
        }
        Ok(IntensityField {
            kind: FieldKind::Constant(u),
            sup_value: u,
        })
    }

    pub fn grid(origin: Vec<f64>, spacing: f64, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if origin.is_empty() || origin.len() != shape.len() {
            return Err(Error::invalid("grid.shape", "shape and origin must have the same positive length"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("grid.spacing", "spacing must be positive"));
        }
        if shape.iter().any(|&n| n < 2) {
            return Err(Error::invalid("grid.shape", "every axis needs at least two nodes"));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::invalid("grid.values", "value count does not match the grid shape"));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("grid.values", "intensities must be finite and nonnegative"));
        }
        let sup_value = values.iter().cloned().fold(0.0, f64::max);
        Ok(IntensityField {
            kind: FieldKind::Grid(GridField {
                origin,
                spacing,
                shape,
                values,
            }),
            sup_value,
        })
    }

    /// Field that varies linearly along `axis` from `u_lo` at `region.lo` to
    /// `u_hi` at `region.hi`, constant in the other directions.
    pub fn linear(region: &BoxRegion, axis: usize, u_lo: f64, u_hi: f64) -> Result<Self> {
        let d = region.dim();
        if axis >= d {
            return Err(Error::invalid("axis", "axis out of range"));
        }
        // Two nodes per axis on a common spacing requires a cube-shaped cell;
        // use the longest side and extend the other axes.
        let n_along = 2usize;
        let spacing = (0..d).map(|k| region.side(k)).fold(0.0, f64::max);
        let shape = vec![n_along; d];
        let mut values = Vec::with_capacity(1 << d);
        for mask in 0..1usize << d {
            // row-major, last axis fastest: bit for axis k is (d-1-k)
            let hi_on_axis = mask >> (d - 1 - axis) & 1 == 1;
            let t = if hi_on_axis { spacing / region.side(axis) } else { 0.0 };
            values.push(u_lo + (u_hi - u_lo) * t);
        }
        Self::grid(region.lo.clone(), spacing, shape, values)
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn sup_value(&self) -> f64 {
        self.sup_value
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FieldKind::Constant(_))
    }

    /// `u(p)`; grid fields interpolate multilinearly and reject points
    /// outside the sampled region.
    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        match &self.kind {
            FieldKind::Constant(u) => Ok(*u),
            FieldKind::Grid(g) => {
                if p.len() != g.origin.len() {
                    return Err(Error::invalid("point", "dimension does not match the grid"));
                }
                let d = p.len();
                let mut cell = [0usize; 8];
                let mut frac = [0.0f64; 8];
                if d > 8 {
                    return Err(Error::invalid("grid", "at most 8 dimensions supported"));
                }
                for k in 0..d {
                    let s = (p[k] - g.origin[k]) / g.spacing;
                    let top = (g.shape[k] - 1) as f64;
                    if !(s >= -1e-12 && s <= top + 1e-12) {
                        return Err(Error::OutOfDomain(format!(
                            "coordinate {k} = {} outside the intensity grid",
                            p[k]
                        )));
                    }
                    let s = s.clamp(0.0, top);
                    let i = (s.floor() as usize).min(g.shape[k] - 2);
                    cell[k] = i;
                    frac[k] = s - i as f64;
                }
                let mut acc = 0.0;
                for mask in 0..1usize << d {
                    let mut w = 1.0;
                    let mut flat = 0usize;
                    for k in 0..d {
                        let bit = mask >> k & 1;
                        w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                        flat = flat * g.shape[k] + cell[k] + bit;
                    }
                    if w != 0.0 {
                        acc += w * g.values[flat];
                    }
                }
                Ok(acc)
            }
        }
    }

    /// The field `p ↦ u(p / factor)`, used to move an intensity defined on a
    /// macroscopic domain `D` onto the rescaled window `factor · D`.
    pub fn rescaled(&self, factor: f64) -> IntensityField {
        match &self.kind {
            FieldKind::Constant(_) => self.clone(),
            FieldKind::Grid(g) => IntensityField {
                kind: FieldKind::Grid(GridField {
                    origin: g.origin.iter().map(|v| v * factor).collect(),
                    spacing: g.spacing * factor,
                    shape: g.shape.clone(),
                    values: g.values.clone(),
                }),
                sup_value: self.sup_value,
            },
        }
    }

    /// Rejects fields reaching the supercritical threshold unless `allow` is
    /// set, in which case a warning is logged.
    pub fn check_subcritical(&self, u_star: f64, allow: bool) -> Result<()> {
        if self.sup_value >= u_star {
            if allow {
                log::warn!(
                    "intensity sup {} reaches the subcritical threshold {u_star}; continuing on override",
                    self.sup_value
                );
            } else {
                return Err(Error::invalid(
                    "intensity",
                    format!("sup value {} must stay below u* = {u_star}", self.sup_value),
                ));
            }
        }
        Ok(())
    }
}

/// JSON form of domains and intensity fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainSpec {
    Box(Vec<[f64; 2]>),
    Polytope { halfspaces: Vec<HalfSpaceSpec> },
    Union(Vec<Vec<[f64; 2]>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensitySpec {
    Constant(f64),
    Grid {
        origin: Vec<f64>,
        spacing: f64,
        #[serde(default)]
        shape: Option<Vec<usize>>,
        values: Vec<f64>,
    },
}

fn box_from_sides(sides: &[[f64; 2]]) -> Result<BoxRegion> {
    BoxRegion::new(sides.iter().map(|s| s[0]).collect(), sides.iter().map(|s| s[1]).collect())
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self {
            DomainSpec::Box(sides) => Ok(Domain::from_box(box_from_sides(sides)?)),
            DomainSpec::Union(list) => {
                Domain::union_of_boxes(list.iter().map(|s| box_from_sides(s)).collect::<Result<_>>()?)
            }
            DomainSpec::Polytope { halfspaces } => Domain::polytope(
                halfspaces
                    .iter()
                    .map(|h| HalfSpace {
                        normal: h.normal.clone(),
                        offset: h.offset,
                    })
                    .collect(),
            ),
        }
    }
}

impl IntensitySpec {
    pub fn build(&self) -> Result<IntensityField> {
        match self {
            IntensitySpec::Constant(u) => IntensityField::constant(*u),
            IntensitySpec::Grid {
                origin,
                spacing,
                shape,
                values,
            } => {
                let shape = match shape {
                    Some(s) => s.clone(),
                    None if origin.len() == 1 => vec![values.len()],
                    None => {
                        return Err(Error::invalid("grid.shape", "shape is required for grids of dimension > 1"))
                    }
                };
                IntensityField::grid(origin.clone(), *spacing, shape, values.clone())
            }
        }
    }
}

/// `{"domain": …, "intensity": …}` document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub domain: DomainSpec,
    pub intensity: IntensitySpec,
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds both parts and checks the field against `u_star`.
    pub fn build(&self, u_star: f64, allow_supercritical: bool) -> Result<(Domain, IntensityField)> {
        let domain = self.domain.build()?;
        let field = self.intensity.build()?;
        if let FieldKind::Grid(g) = field.kind() {
            if g.origin.len() != domain.dim() {
                return Err(Error::invalid("intensity.grid.origin", "dimension differs from the domain"));
            }
        }
        field.check_subcritical(u_star, allow_supercritical)?;
        Ok((domain, field))
    }
}
