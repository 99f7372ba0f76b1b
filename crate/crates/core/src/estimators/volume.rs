use rand::Rng;
use serde_json::json;

use super::{check_replicas, replicate, EstimateRecord};
use crate::clusters::{build_index, SpatialIndex};
use crate::error::{Error, Result};
use crate::limits::sigma;
use crate::model::{BoxRegion, PointConfiguration};
use crate::sampler::sample_homogeneous;

pub(crate) fn is_covered(idx: &SpatialIndex, cfg: &PointConfiguration, p: &[f64]) -> bool {
    let mut hit = false;
    idx.for_each_within(cfg, p, cfg.radius(), |_| hit = true);
    hit
}

/// Calls `f` on one uniform point in each of `m^d` equal strata of `region`.
pub(crate) fn stratified<R: Rng + ?Sized>(region: &BoxRegion, m: usize, rng: &mut R, mut f: impl FnMut(&[f64])) {
    let d = region.dim();
    let total = m.pow(d as u32);
    let mut p = vec![0.0; d];
    for code in 0..total {
        let mut c = code;
        for (k, v) in p.iter_mut().enumerate() {
            let cell = c % m;
            c /= m;
            *v = region.lo[k] + (cell as f64 + rng.random::<f64>()) * region.side(k) / m as f64;
        }
        f(&p);
    }
}

/// Strata per axis so that `m^d ≥ probes`.
pub(crate) fn strata_per_axis(probes: usize, d: usize) -> usize {
    let mut m = (probes as f64).powf(1.0 / d as f64).floor().max(1.0) as usize;
    while m.pow(d as u32) < probes {
        m += 1;
    }
    m
}

/// Mean over stratified probes of `1` (vacant) or `xi^d` (covered).
pub fn weighted_vacant_probes<R: Rng + ?Sized>(
    cfg: &PointConfiguration,
    region: &BoxRegion,
    xi: f64,
    probes: usize,
    rng: &mut R,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::invalid("probes", "at least one probe is required"));
    }
    let idx = build_index(cfg);
    let w_in = xi.powi(cfg.dim() as i32);
    let m = strata_per_axis(probes, cfg.dim());
    let mut acc = 0.0;
    let mut n = 0usize;
    stratified(region, m, rng, |p| {
        acc += if is_covered(&idx, cfg, p) { w_in } else { 1.0 };
        n += 1;
    });
    Ok(acc / n as f64)
}

/// Vacant volume fraction of `[0, M]^d`, weighted by `xi^d` inside defects.
#[allow(clippy::too_many_arguments)]
pub fn estimate_volume_fraction(
    u: f64,
    d: usize,
    xi: f64,
    side: f64,
    probes: usize,
    replicas: usize,
    seed: u64,
    task: u64,
) -> Result<EstimateRecord> {
    check_replicas(replicas, 2)?;
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::invalid("u", "intensity must be finite and nonnegative"));
    }
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::invalid("side", "box side must be positive"));
    }
    let target = sigma(u, xi, d)?.powi(d as i32);
    let window = BoxRegion::cube(d, 0.0, side)?;
    // balls centred within one radius outside still cover the window
    let sample = window.expanded(1.0);
    let values = replicate(seed, task, replicas, |_, stream| {
        let mut rng = stream.rng();
        let cfg = sample_homogeneous(u, &sample, &mut rng)?;
        weighted_vacant_probes(&cfg, &window, xi, probes, &mut rng)
    })?;
    let rec = EstimateRecord::from_values(
        "volume_fraction",
        json!({"u": u, "d": d, "xi": xi, "side": side, "probes": probes, "replicas": replicas}),
        seed,
        &values,
    );
    let z = if rec.stderr > 0.0 { (rec.mean - target) / rec.stderr } else { 0.0 };
    Ok(rec
        .with("target", target)
        .with("z", z)
        .with("probes_used", strata_per_axis(probes, d).pow(d as u32)))
}
