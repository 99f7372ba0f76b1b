use serde::Serialize;
use serde_json::json;

use super::{check_replicas, check_subcritical_u, fit_line, replicate, EstimateRecord};
use crate::clusters::find_clusters;
use crate::error::{Error, Result};
use crate::model::BoxRegion;
use crate::sampler::sample_homogeneous;

/// Straight-line fit of log-survival against diameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `(t, P(diam > t))` points inside the fitting band.
    pub band: Vec<(f64, f64)>,
    pub clusters: usize,
    /// Empirical `P(diam > 2)`.
    pub survival_at_2: f64,
}

/// Survival band used for the fit.
pub const TAIL_BAND: (f64, f64) = (1e-3, 1e-1);
const MIN_POINTS: usize = 10;

/// Fits `ln P(diam > t) ≈ a + b t` over the points whose survival lies in
/// [`TAIL_BAND`].
pub fn fit_tail(diameters: &[f64]) -> Result<TailFit> {
    let mut v = diameters.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut band = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let s = (n - 1 - j) as f64 / n as f64;
        if s >= TAIL_BAND.0 && s <= TAIL_BAND.1 {
            band.push((v[i], s));
        }
        i = j + 1;
    }
    if band.len() < MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} distinct diameters in the survival band, {MIN_POINTS} needed",
            band.len()
        )));
    }
    let x: Vec<f64> = band.iter().map(|p| p.0).collect();
    let y: Vec<f64> = band.iter().map(|p| p.1.ln()).collect();
    let (intercept, slope, r2) =
        fit_line(&x, &y).ok_or_else(|| Error::InsufficientData("degenerate survival band".into()))?;
    let above2 = v.iter().filter(|&&t| t > 2.0 + 1e-12).count();
    Ok(TailFit {
        slope,
        intercept,
        r2,
        band,
        clusters: n,
        survival_at_2: above2 as f64 / n as f64,
    })
}

/// Diameters of every cluster of every replica on `[0, side]^d`.
#[allow(clippy::too_many_arguments)]
pub fn cluster_tail(
    u: f64,
    d: usize,
    side: f64,
    replicas: usize,
    u_star: f64,
    seed: u64,
    task: u64,
) -> Result<(EstimateRecord, TailFit, Vec<Vec<f64>>)> {
    check_subcritical_u(u, u_star, "u")?;
    check_replicas(replicas, 1)?;
    let region = BoxRegion::cube(d, 0.0, side)?;
    let per: Vec<Vec<f64>> = replicate(seed, task, replicas, |_, stream| {
        let cfg = sample_homogeneous(u, &region, &mut stream.rng())?;
        let cs = find_clusters(&cfg);
        (0..cs.len()).map(|c| cs.diameter(c)).collect()
    })?;
    let all: Vec<f64> = per.iter().flatten().copied().collect();
    let fit = fit_tail(&all)?;
    let maxima: Vec<f64> = per.iter().map(|v| v.iter().copied().fold(0.0, f64::max)).collect();
    let rec = EstimateRecord::from_values(
        "cluster_tail.max_diameter",
        json!({"u": u, "d": d, "side": side, "replicas": replicas}),
        seed,
        &maxima,
    )
    .with("slope", fit.slope)
    .with("intercept", fit.intercept)
    .with("r2", fit.r2)
    .with("band_points", fit.band.len())
    .with("clusters", fit.clusters)
    .with("survival_at_2", fit.survival_at_2);
    Ok((rec, fit, per))
}
