use serde_json::json;

use super::eta::eta_box;
use super::{check_replicas, check_subcritical_u, replicate, EstimateRecord};
use crate::clusters::find_clusters;
use crate::error::{Error, Result};
use crate::metric::{distance_graph_xi, distance_xi0};
use crate::model::{Point, PointConfiguration, SimParams};
use crate::sampler::{restrict_level, sample_marked};

/// Slack allowed in the pathwise comparison (floating-point only).
pub const COUPLING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub low: EstimateRecord,
    pub high: EstimateRecord,
    pub passes: usize,
    pub replicas: usize,
}

/// Distances from the origin to `L e_1` at two levels of one marked sample
/// per replica. Any replica where the higher level is farther is a hard
/// failure.
#[allow(clippy::too_many_arguments)]
pub fn coupled_monotonicity(
    u_low: f64,
    u_high: f64,
    params: &SimParams,
    l: f64,
    replicas: usize,
    u_star: f64,
    k: usize,
    seed: u64,
    task: u64,
) -> Result<CouplingReport> {
    params.validate()?;
    check_subcritical_u(u_low, u_star, "u_low")?;
    check_subcritical_u(u_high, u_star, "u_high")?;
    if u_low > u_high {
        return Err(Error::invalid("u_low", "must not exceed u_high"));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid("L", "length must be positive"));
    }
    check_replicas(replicas, 2)?;
    let d = params.d;
    let region = eta_box(d, l, None, None)?;
    let x = Point::origin(d);
    let y = Point::on_axis(d, 0, l);
    let dist = |cfg: &PointConfiguration| -> Result<f64> {
        let cs = find_clusters(cfg);
        Ok(if params.xi == 0.0 {
            distance_xi0(&cs, &x, &y)?.value
        } else {
            distance_graph_xi(&cs, params.xi, &x, &y, k)?.value
        })
    };
    let pairs = replicate(seed, task, replicas, |_, stream| {
        if u_high == 0.0 {
            return Ok((l, l));
        }
        let marked = sample_marked(&region, u_high, &mut stream.rng())?;
        let lo = dist(&restrict_level(&marked, u_low))?;
        let hi = dist(&restrict_level(&marked, u_high))?;
        Ok((lo, hi))
    })?;
    for (i, (lo, hi)) in pairs.iter().enumerate() {
        if hi > &(lo + COUPLING_SLACK) {
            return Err(Error::InvariantViolation(format!(
                "replica {i}: distance {hi} at u = {u_high} exceeds {lo} at u = {u_low}"
            )));
        }
    }
    let low: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let high: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let rec = |u: f64, v: &[f64]| {
        EstimateRecord::from_values(
            "coupled_distance",
            json!({"u": u, "d": d, "xi": params.xi, "L": l, "replicas": replicas}),
            seed,
            v,
        )
    };
    Ok(CouplingReport {
        low: rec(u_low, &low),
        high: rec(u_high, &high),
        passes: replicas,
        replicas,
    })
}
