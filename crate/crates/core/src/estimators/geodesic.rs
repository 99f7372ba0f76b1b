use serde_json::json;

use super::eta::eta_box;
use super::{check_replicas, check_subcritical_u, replicate, EstimateRecord};
use crate::clusters::find_clusters;
use crate::error::{Error, Result};
use crate::metric::geodesic_xi0;
use crate::model::{Point, SimParams};
use crate::sampler::sample_homogeneous;

fn point_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut dot = 0.0;
    for k in 0..p.len() {
        let e = b[k] - a[k];
        ab2 += e * e;
        dot += (p[k] - a[k]) * e;
    }
    let t = if ab2 > 0.0 { (dot / ab2).clamp(0.0, 1.0) } else { 0.0 };
    (0..p.len())
        .map(|k| {
            let q = a[k] + t * (b[k] - a[k]) - p[k];
            q * q
        })
        .sum::<f64>()
        .sqrt()
}

/// Hausdorff distance between a polyline and the segment `[a, b]`.
///
/// Distance to a segment is convex along each polyline piece, so the
/// polyline side is exact at the vertices; the segment side is sampled at
/// spacing `step`.
pub fn hausdorff_to_segment(poly: &[Point], a: &[f64], b: &[f64], step: f64) -> Result<f64> {
    if poly.is_empty() {
        return Err(Error::invalid("polyline", "must contain at least one point"));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let mut h = poly.iter().map(|p| point_segment(p, a, b)).fold(0.0, f64::max);
    let len = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n = (len / step).ceil().max(1.0) as usize;
    let mut q = vec![0.0; a.len()];
    for s in 0..=n {
        let t = s as f64 / n as f64;
        for k in 0..a.len() {
            q[k] = a[k] + t * (b[k] - a[k]);
        }
        let to_poly = if poly.len() == 1 {
            point_segment(&q, &poly[0], &poly[0])
        } else {
            poly.windows(2)
                .map(|w| point_segment(&q, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min)
        };
        h = h.max(to_poly);
    }
    Ok(h)
}

/// `d_H(γ, [0, L e_1]) / L` for a reconstructed geodesic `γ`, one record
/// per length. Length `i` uses task `task + i`.
#[allow(clippy::too_many_arguments)]
pub fn geodesic_deviation(
    u: f64,
    params: &SimParams,
    lengths: &[f64],
    replicas: usize,
    u_star: f64,
    seed: u64,
    task: u64,
    margin: Option<f64>,
) -> Result<Vec<EstimateRecord>> {
    params.validate()?;
    if params.xi != 0.0 {
        return Err(Error::invalid("xi", "geodesic deviation requires xi = 0"));
    }
    check_subcritical_u(u, u_star, "u")?;
    check_replicas(replicas, 2)?;
    if lengths.is_empty() || lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::invalid("lengths", "lengths must be positive"));
    }
    let d = params.d;
    let step = 0.25;
    let mut out = Vec::new();
    for (li, &l) in lengths.iter().enumerate() {
        let region = eta_box(d, l, margin, None)?;
        let values = replicate(seed, task + li as u64, replicas, |_, stream| {
            let cfg = sample_homogeneous(u, &region, &mut stream.rng())?;
            let cs = find_clusters(&cfg);
            let x = Point::origin(d);
            let y = Point::on_axis(d, 0, l);
            let g = geodesic_xi0(&cs, &x, &y)?;
            Ok(hausdorff_to_segment(&g.geodesic, &x, &y, step)? / l)
        })?;
        out.push(EstimateRecord::from_values(
            "geodesic_deviation",
            json!({"u": u, "d": d, "L": l, "replicas": replicas}),
            seed,
            &values,
        ));
    }
    Ok(out)
}
