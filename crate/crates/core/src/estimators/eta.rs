use serde_json::json;

use super::{check_replicas, check_subcritical_u, fit_line, replicate, EstimateRecord};
use crate::clusters::find_clusters;
use crate::error::{Error, Result};
use crate::limits::{eta_upper_bound, sigma, EtaEntry};
use crate::metric::{distance_graph_xi, distance_xi0};
use crate::model::{BoxRegion, Point, SimParams};
use crate::sampler::sample_homogeneous;

#[derive(Debug, Clone, PartialEq)]
pub struct EtaOptions {
    /// Margin beyond both endpoints; `None` means `10·ln(1 + R)`.
    pub margin: Option<f64>,
    /// Half-width across the segment; `None` means `margin + R/4`.
    pub half_width: Option<f64>,
    /// Boundary nodes per ball when `xi > 0`.
    pub k: usize,
    /// Deviations `ε` for the tail diagnostics `P(|X/R − η̂| > ε)`.
    pub tail_eps: Vec<f64>,
}

impl Default for EtaOptions {
    fn default() -> Self {
        EtaOptions {
            margin: None,
            half_width: None,
            k: 16,
            tail_eps: vec![0.02, 0.05, 0.1],
        }
    }
}

/// Sampling window for a distance from the origin to `R e_1`.
pub fn eta_box(d: usize, r: f64, margin: Option<f64>, half_width: Option<f64>) -> Result<BoxRegion> {
    let m = margin.unwrap_or(10.0 * (1.0 + r).ln());
    let w = half_width.unwrap_or(m + r / 4.0);
    if !(m >= 0.0 && w > 0.0) {
        return Err(Error::invalid("margin", "margin must be nonnegative and width positive"));
    }
    let mut lo = vec![-w; d];
    let mut hi = vec![w; d];
    lo[0] = -m;
    hi[0] = r + m;
    BoxRegion::new(lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaEstimate {
    pub u: f64,
    /// One record of `dist(0, R e_1)/R` per scale, in input order.
    pub records: Vec<EstimateRecord>,
    /// Table row at the largest scale.
    pub entry: EtaEntry,
    /// `(a, b)` of the diagnostic fit `a + b/R`.
    pub fit: Option<(f64, f64)>,
    pub bound: f64,
    pub sigma: f64,
}

impl EtaEstimate {
    pub fn largest(&self) -> &EstimateRecord {
        self.records.last().expect("at least one scale")
    }

    /// Mean above the closed-form bound by more than three standard errors.
    pub fn bound_violated(&self) -> bool {
        let r = self.largest();
        r.mean > self.bound + 3.0 * r.stderr
    }
}

/// Estimates `η(u)` from `dist(0, R e_1)/R` on fresh realizations at each
/// scale of `r_list`. Scale `i` uses task `task + i`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_eta(
    u: f64,
    params: &SimParams,
    r_list: &[f64],
    replicas: usize,
    u_star: f64,
    seed: u64,
    task: u64,
    opts: &EtaOptions,
) -> Result<EtaEstimate> {
    params.validate()?;
    check_subcritical_u(u, u_star, "u")?;
    check_replicas(replicas, 2)?;
    if r_list.is_empty() || r_list.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::invalid("R", "scales must be positive"));
    }
    if r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("R", "scales must be strictly increasing"));
    }
    if params.xi > 0.0 && opts.k < 4 {
        return Err(Error::invalid("K", "at least 4 nodes per ball"));
    }
    let d = params.d;
    let bound = eta_upper_bound(u, params.xi, d)?;
    let sig = sigma(u, params.xi, d)?;
    let mut records = Vec::new();
    for (ri, &r) in r_list.iter().enumerate() {
        let region = eta_box(d, r, opts.margin, opts.half_width)?;
        let values = replicate(seed, task + ri as u64, replicas, |_, stream| {
            let cfg = sample_homogeneous(u, &region, &mut stream.rng())?;
            let cs = find_clusters(&cfg);
            let x = Point::origin(d);
            let y = Point::on_axis(d, 0, r);
            let v = if params.xi == 0.0 {
                distance_xi0(&cs, &x, &y)?.value
            } else {
                distance_graph_xi(&cs, params.xi, &x, &y, opts.k)?.value
            };
            Ok(v / r)
        })?;
        let params_json = json!({"u": u, "d": d, "xi": params.xi, "R": r, "replicas": replicas});
        records.push(
            EstimateRecord::from_values("eta", params_json, seed, &values)
                .with("bound", bound)
                .with("sigma", sig)
                .with("box_lo", &region.lo)
                .with("box_hi", &region.hi),
        );
    }
    let top = records.last().unwrap().mean;
    for rec in records.iter_mut() {
        let vals = rec.per_replica.clone().unwrap_or_default();
        let tails: Vec<_> = opts
            .tail_eps
            .iter()
            .map(|&e| {
                let hits = vals.iter().filter(|v| (*v - top).abs() > e).count();
                json!({"eps": e, "p": hits as f64 / vals.len() as f64})
            })
            .collect();
        let violated = rec.mean > bound + 3.0 * rec.stderr;
        *rec = rec
            .clone()
            .with("tail", tails)
            .with("bound_violation", violated)
            .with("gap_sigma", sig - rec.mean);
    }
    let fit = if r_list.len() >= 2 {
        let x: Vec<f64> = r_list.iter().map(|r| 1.0 / r).collect();
        let y: Vec<f64> = records.iter().map(|r| r.mean).collect();
        fit_line(&x, &y).map(|(a, b, _)| (a, b))
    } else {
        None
    };
    let last = records.last().unwrap();
    let entry = EtaEntry {
        u,
        eta: last.mean,
        stderr: last.stderr,
    };
    Ok(EtaEstimate {
        u,
        records,
        entry,
        fit,
        bound,
        sigma: sig,
    })
}
