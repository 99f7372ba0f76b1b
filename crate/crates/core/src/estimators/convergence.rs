//! Experiments comparing the rescaled random geometry on a macroscopic
//! domain `D` with its deterministic limit: distances against the conformal
//! metric `η(u(x))·e`, volumes against `σ(u(x))^d dx`, and how far points of
//! `D` sit from the vacant set.
//!
//! A realization at scale `R` is a process of intensity `u(x/R)` on `R·D`
//! with radius-1 balls; only centers inside `R·D` are sampled.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::volume::{is_covered, strata_per_axis, stratified};
use super::{check_replicas, replicate, EstimateRecord, Moments};
use crate::clusters::{find_clusters, ClusterSet};
use crate::error::{Error, Result};
use crate::limits::{eta_lookup, sigma, ConformalGrid, EtaTable};
use crate::metric::IntrinsicMetric;
use crate::model::{Domain, FieldKind, IntensityField, Point, PointConfiguration};
use crate::sampler::{sample_homogeneous, RngStream};

/// Inputs shared by the three experiments. `domain` and `field` live in
/// macroscopic coordinates.
#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub domain: Domain,
    pub field: IntensityField,
    pub xi: f64,
    pub r_list: Vec<f64>,
    pub replicas: usize,
    pub u_star: f64,
    /// Boundary nodes per ball when `xi > 0`.
    pub k: usize,
}

impl ConvergenceSetup {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.xi) {
            return Err(Error::invalid("xi", "dilatation factor must lie in [0, 1)"));
        }
        if self.r_list.is_empty() || self.r_list.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("R", "scales must be positive"));
        }
        check_replicas(self.replicas, 1)?;
        self.field.check_subcritical(self.u_star, false)?;
        if let FieldKind::Grid(g) = self.field.kind() {
            if g.origin.len() != self.domain.dim() {
                return Err(Error::invalid("intensity", "dimension differs from the domain"));
            }
        }
        let bb = self.domain.bounding_box();
        for corner in [&bb.lo, &bb.hi] {
            self.field.eval(corner).map_err(|_| {
                Error::invalid("intensity", "the field must be defined on the whole domain")
            })?;
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Smallest and largest value the field can take on the domain.
    pub fn field_range(&self) -> (f64, f64) {
        match self.field.kind() {
            FieldKind::Constant(u) => (*u, *u),
            FieldKind::Grid(g) => (
                g.values.iter().copied().fold(f64::INFINITY, f64::min),
                g.values.iter().copied().fold(0.0, f64::max),
            ),
        }
    }

    /// One rescaled realization at scale `r`.
    /// Centers are kept when their ball meets `R·D`; the field is read at
    /// the nearest point of the bounding box for centers in the collar.
    pub fn sample<G: Rng + ?Sized>(&self, r: f64, rng: &mut G) -> Result<PointConfiguration> {
        let inner = self.domain.bounding_box().scaled(r);
        let field = self.field.rescaled(r);
        let sup = field.sup_value();
        let cfg = sample_homogeneous(sup, &inner.expanded(1.0), rng)?;
        let scaled = self.domain.scaled(r);
        let mut out = PointConfiguration::new(cfg.dim(), cfg.radius())?;
        let mut q = vec![0.0; cfg.dim()];
        for c in cfg.centers() {
            for (k, v) in q.iter_mut().enumerate() {
                *v = c[k].clamp(inner.lo[k], inner.hi[k]);
            }
            let keep = rng.random::<f64>() * sup < field.eval(&q)?;
            if keep && (scaled.contains_point(c) || scaled.ball_meets_boundary(c, 1.0)) {
                out.push(c)?;
            }
        }
        Ok(out)
    }

    fn run<F>(&self, seed: u64, task: u64, stat: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(f64, &RngStream) -> Result<f64> + Sync,
    {
        self.r_list
            .iter()
            .enumerate()
            .map(|(ri, &r)| replicate(seed, task + ri as u64, self.replicas, |_, s| stat(r, s)))
            .collect()
    }
}

/// Per-scale records plus the paired comparison of the first and last
/// scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedReport {
    pub records: Vec<EstimateRecord>,
    /// Fraction of replicas whose statistic at the last scale is below the
    /// one at the first scale.
    pub decrease_fraction: Option<f64>,
}

fn paired(name: &str, setup: &ConvergenceSetup, seed: u64, per_r: &[Vec<f64>], extra: serde_json::Value) -> PairedReport {
    let records = setup
        .r_list
        .iter()
        .zip(per_r)
        .map(|(&r, v)| {
            EstimateRecord::from_values(
                name,
                json!({"R": r, "replicas": setup.replicas, "xi": setup.xi, "setup": extra}),
                seed,
                v,
            )
        })
        .collect();
    let decrease_fraction = if per_r.len() >= 2 {
        let (a, b) = (&per_r[0], &per_r[per_r.len() - 1]);
        let wins = a.iter().zip(b).filter(|(x, y)| y < x).count();
        Some(wins as f64 / a.len() as f64)
    } else {
        None
    };
    PairedReport {
        records,
        decrease_fraction,
    }
}

/// Lattice of spacing `spacing` anchored at the domain's lower corner,
/// keeping the points inside the domain.
pub fn net_points(domain: &Domain, spacing: f64) -> Result<Vec<Point>> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid("net_spacing", "must be positive"));
    }
    let bb = domain.bounding_box();
    let d = bb.dim();
    let counts: Vec<usize> = (0..d).map(|k| (bb.side(k) / spacing + 1e-9).floor() as usize + 1).collect();
    let total: usize = counts.iter().product();
    if total > 10_000_000 {
        return Err(Error::invalid("net_spacing", "too many lattice points"));
    }
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let p: Vec<f64> = (0..d)
            .map(|k| {
                let i = c % counts[k];
                c /= counts[k];
                bb.lo[k] + i as f64 * spacing
            })
            .collect();
        if domain.contains_point(&p) {
            out.push(Point(p));
        }
    }
    Ok(out)
}

/// Sup over net pairs of `|d_ρ(x, y) − dist_R(x, y)|` with `ρ = η∘u`.
pub fn distortion_experiment(
    setup: &ConvergenceSetup,
    table: &EtaTable,
    net_spacing: f64,
    grid_spacing: f64,
    pair_cap: usize,
    seed: u64,
    task: u64,
) -> Result<PairedReport> {
    setup.validate()?;
    table.validate()?;
    if table.d != setup.dim() || table.xi != setup.xi {
        return Err(Error::invalid("table", "d and xi must match the experiment"));
    }
    let (lo, hi) = setup.field_range();
    let (tlo, thi) = table.u_range();
    if lo < tlo || hi > thi {
        return Err(Error::invalid(
            "table",
            format!("field range [{lo}, {hi}] is not covered by the table range [{tlo}, {thi}]"),
        ));
    }
    let net = net_points(&setup.domain, net_spacing)?;
    let pairs = net.len() * net.len().saturating_sub(1) / 2;
    if pairs > pair_cap {
        return Err(Error::invalid(
            "net_spacing",
            format!("{pairs} net pairs exceed the cap of {pair_cap}"),
        ));
    }
    let field = &setup.field;
    let grid = ConformalGrid::new(&setup.domain, grid_spacing, |p| {
        field.eval(p).and_then(|u| eta_lookup(table, u)).unwrap_or(f64::NAN)
    })?;
    let limit: Vec<Vec<f64>> = (0..net.len())
        .into_par_iter()
        .map(|i| grid.distances_from(&net[i], &net[i + 1..]))
        .collect::<Result<_>>()?;
    let per_r = setup.run(seed, task, |r, stream| {
        let cfg = setup.sample(r, &mut stream.rng())?;
        let metric = IntrinsicMetric::new(&cfg, &setup.domain.scaled(r))?;
        let scaled: Vec<Vec<f64>> = net.iter().map(|p| p.iter().map(|v| v * r).collect()).collect();
        let mut sup = 0.0f64;
        for i in 0..net.len() {
            let rest = &scaled[i + 1..];
            let d: Vec<f64> = if setup.xi == 0.0 {
                metric.distances_from(&scaled[i], rest)?
            } else {
                rest.iter()
                    .map(|y| Ok(metric.distance(&scaled[i], y, setup.xi, setup.k)?.value))
                    .collect::<Result<_>>()?
            };
            for (j, v) in d.iter().enumerate() {
                sup = sup.max((limit[i][j] - v / r).abs());
            }
        }
        Ok(sup)
    })?;
    let extra = json!({"net_points": net.len(), "pairs": pairs, "grid_spacing": grid_spacing});
    Ok(paired("distortion", setup, seed, &per_r, extra))
}

/// Test function with sup-norm and Lipschitz constant at most 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    /// `clamp(slope · (x[axis] − offset), −1, 1)`.
    Ramp { axis: usize, offset: f64, slope: f64 },
    /// `height · max(0, 1 − |x − center| / radius)`.
    Bump { center: Vec<f64>, radius: f64, height: f64 },
}

impl TestFunction {
    pub fn validate(&self, d: usize) -> Result<()> {
        let ok = match self {
            TestFunction::Constant { value } => value.abs() <= 1.0,
            TestFunction::Ramp { axis, slope, offset } => *axis < d && slope.abs() <= 1.0 && offset.is_finite(),
            TestFunction::Bump { center, radius, height } => {
                center.len() == d && *radius > 0.0 && height.abs() <= 1.0 && height.abs() <= *radius
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "test_functions",
                format!("{self:?} needs sup-norm and Lipschitz constant at most 1"),
            ))
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Ramp { axis, offset, slope } => (slope * (x[*axis] - offset)).clamp(-1.0, 1.0),
            TestFunction::Bump { center, radius, height } => {
                let r = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                height * (1.0 - r / radius).max(0.0)
            }
        }
    }
}

/// `∫_D f σ(u(x))^d dx` by the midpoint rule on `n^d` cells.
fn limit_integrals(setup: &ConvergenceSetup, fs: &[TestFunction], n: usize) -> Result<Vec<f64>> {
    let bb = setup.domain.bounding_box();
    let d = setup.dim();
    let cell: f64 = (0..d).map(|k| bb.side(k) / n as f64).product();
    let mut acc = vec![0.0; fs.len()];
    let mut p = vec![0.0; d];
    for code in 0..n.pow(d as u32) {
        let mut c = code;
        for (k, v) in p.iter_mut().enumerate() {
            *v = bb.lo[k] + (c % n) as f64 * bb.side(k) / n as f64 + 0.5 * bb.side(k) / n as f64;
            c /= n;
        }
        if !setup.domain.contains_point(&p) {
            continue;
        }
        let w = sigma(setup.field.eval(&p)?, setup.xi, d)?.powi(d as i32) * cell;
        for (a, f) in acc.iter_mut().zip(fs) {
            *a += f.eval(&p) * w;
        }
    }
    Ok(acc)
}

/// `|∫ f dν_R − ∫ f σ(u)^d dx|` for each test function; the first report
/// holds the sup over the family, the second one record per (R, f).
#[allow(clippy::too_many_arguments)]
pub fn measure_experiment(
    setup: &ConvergenceSetup,
    functions: &[TestFunction],
    probes: usize,
    quadrature: usize,
    seed: u64,
    task: u64,
) -> Result<(PairedReport, Vec<EstimateRecord>)> {
    setup.validate()?;
    if functions.is_empty() {
        return Err(Error::invalid("test_functions", "at least one test function is required"));
    }
    for f in functions {
        f.validate(setup.dim())?;
    }
    if probes == 0 || quadrature == 0 {
        return Err(Error::invalid("probes", "probe and quadrature counts must be positive"));
    }
    let d = setup.dim();
    let target = limit_integrals(setup, functions, quadrature)?;
    let bb = setup.domain.bounding_box().clone();
    let w_in = setup.xi.powi(d as i32);
    let m = strata_per_axis(probes, d);
    let per_r: Vec<Vec<Vec<f64>>> = setup
        .r_list
        .iter()
        .enumerate()
        .map(|(ri, &r)| {
            replicate(seed, task + ri as u64, setup.replicas, |_, stream| {
                let mut rng = stream.rng();
                let cfg = setup.sample(r, &mut rng)?;
                let idx = crate::clusters::build_index(&cfg);
                let mut acc = vec![0.0; functions.len()];
                let mut n = 0usize;
                let mut q = vec![0.0; d];
                stratified(&bb, m, &mut rng, |x| {
                    n += 1;
                    if !setup.domain.contains_point(x) {
                        return;
                    }
                    for k in 0..d {
                        q[k] = x[k] * r;
                    }
                    let w = if is_covered(&idx, &cfg, &q) { w_in } else { 1.0 };
                    for (a, f) in acc.iter_mut().zip(functions) {
                        *a += f.eval(x) * w;
                    }
                });
                let vol = bb.volume() / n as f64;
                Ok(acc.iter().zip(&target).map(|(a, t)| a * vol - t).collect())
            })
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (ri, &r) in setup.r_list.iter().enumerate() {
        for (fi, f) in functions.iter().enumerate() {
            let signed: Vec<f64> = per_r[ri].iter().map(|x| x[fi]).collect();
            let v: Vec<f64> = signed.iter().map(|x| x.abs()).collect();
            let m = Moments::from_slice(&signed);
            records.push(
                EstimateRecord::from_values(
                    "measure_difference",
                    json!({"R": r, "f": f, "replicas": setup.replicas, "xi": setup.xi}),
                    seed,
                    &v,
                )
                .with("limit_integral", target[fi])
                .with("signed_mean", m.mean())
                .with("signed_stderr", m.stderr()),
            );
        }
    }
    let sups: Vec<Vec<f64>> = per_r
        .iter()
        .map(|reps| reps.iter().map(|x| x.iter().fold(0.0, |a: f64, b| a.max(b.abs()))).collect())
        .collect();
    let extra = json!({"functions": functions.len(), "probes": m.pow(d as u32), "quadrature": quadrature});
    Ok((paired("measure_sup", setup, seed, &sups, extra), records))
}

/// Uncovered angular intervals of ball `j`'s boundary circle (planar).
fn uncovered_arcs(cs: &ClusterSet, j: usize) -> Vec<(f64, f64)> {
    use std::f64::consts::TAU;
    let cfg = cs.config();
    let r = cfg.radius();
    let c = cfg.center(j);
    let mut covered: Vec<(f64, f64)> = Vec::new();
    let mut swallowed = false;
    cs.index().for_each_within(cfg, c, 2.0 * r, |k| {
        if k == j {
            return;
        }
        let o = cfg.center(k);
        let (dx, dy) = (o[0] - c[0], o[1] - c[1]);
        let delta = (dx * dx + dy * dy).sqrt();
        if delta == 0.0 {
            // coincident balls: the lower index owns the circle
            swallowed |= k < j;
            return;
        }
        let half = (delta / (2.0 * r)).min(1.0).acos();
        let mid = dy.atan2(dx).rem_euclid(TAU);
        let (a, b) = (mid - half, mid + half);
        if a < 0.0 {
            covered.push((a + TAU, TAU));
            covered.push((0.0, b));
        } else if b > TAU {
            covered.push((a, TAU));
            covered.push((0.0, b - TAU));
        } else {
            covered.push((a, b));
        }
    });
    if swallowed {
        return Vec::new();
    }
    covered.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut free = Vec::new();
    let mut at = 0.0;
    for (a, b) in covered {
        if a > at {
            free.push((at, a));
        }
        at = f64::max(at, b);
    }
    if at < TAU {
        free.push((at, TAU));
    }
    free
}

fn arc_distance(p: &[f64], c: &[f64], r: f64, arc: (f64, f64)) -> f64 {
    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
    let rho = (dx * dx + dy * dy).sqrt();
    if rho > 0.0 {
        let th = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
        if th >= arc.0 && th <= arc.1 {
            return (r - rho).abs();
        }
    }
    [arc.0, arc.1]
        .iter()
        .map(|t| {
            let (ex, ey) = (c[0] + r * t.cos() - p[0], c[1] + r * t.sin() - p[1]);
            (ex * ex + ey * ey).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Distance from a planar point to the closure of the vacant set.
///
/// The nearest vacant point is a limit of points on uncovered boundary arcs
/// of the cluster containing `p`; `0` when `p` is vacant.
pub fn depth_to_vacant(cs: &ClusterSet, p: &[f64]) -> Result<f64> {
    let cfg = cs.config();
    if cfg.dim() != 2 {
        return Err(Error::invalid("d", "vacant-set depth is implemented for d = 2"));
    }
    let balls = cs.balls_containing(p);
    let Some(&first) = balls.first() else {
        return Ok(0.0);
    };
    let r = cfg.radius();
    let mut best = f64::INFINITY;
    for &j in cs.members(cs.cluster_of(first)) {
        let c = cfg.center(j as usize);
        let rho = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
        if (rho - r).abs() >= best {
            continue;
        }
        for arc in uncovered_arcs(cs, j as usize) {
            best = best.min(arc_distance(p, c, r, arc));
        }
    }
    Ok(best)
}

/// Max over a probe lattice of the distance to the vacant set, in
/// macroscopic units. Planar and `xi = 0` only.
pub fn surjectivity_experiment(
    setup: &ConvergenceSetup,
    probe_spacing: f64,
    seed: u64,
    task: u64,
) -> Result<PairedReport> {
    setup.validate()?;
    if setup.xi != 0.0 {
        return Err(Error::invalid("xi", "the surjectivity experiment requires xi = 0"));
    }
    if setup.dim() != 2 {
        return Err(Error::invalid("d", "the surjectivity experiment is implemented for d = 2"));
    }
    let probes = net_points(&setup.domain, probe_spacing)?;
    let per_r = setup.run(seed, task, |r, stream| {
        let cfg = setup.sample(r, &mut stream.rng())?;
        let cs = find_clusters(&cfg);
        let mut worst = 0.0f64;
        let mut q = [0.0; 2];
        for p in &probes {
            q[0] = p[0] * r;
            q[1] = p[1] * r;
            worst = worst.max(depth_to_vacant(&cs, &q)?);
        }
        Ok(worst / r)
    })?;
    let extra = json!({"probes": probes.len(), "probe_spacing": probe_spacing});
    Ok(paired("vacant_hausdorff", setup, seed, &per_r, extra))
}
