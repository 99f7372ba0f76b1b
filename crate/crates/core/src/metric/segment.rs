use crate::clusters::ClusterSet;
use crate::error::{Error, Result};
use crate::model::{check_dim, dist, dist2};

/// Parameter interval of `a + t (b - a)`, `t ∈ [0, 1]`, inside the closed
/// ball `B(c, r)`.
pub(crate) fn chord(a: &[f64], b: &[f64], c: &[f64], r: f64) -> Option<(f64, f64)> {
    let len2 = dist2(a, b);
    if len2 == 0.0 {
        return (dist2(a, c) <= r * r).then_some((0.0, 1.0));
    }
    let t0 = a
        .iter()
        .zip(b)
        .zip(c)
        .map(|((ai, bi), ci)| (bi - ai) * (ci - ai))
        .sum::<f64>()
        / len2;
    let foot2: f64 = a
        .iter()
        .zip(b)
        .zip(c)
        .map(|((ai, bi), ci)| {
            let e = ai + t0 * (bi - ai) - ci;
            e * e
        })
        .sum();
    if foot2 > r * r {
        return None;
    }
    let half = ((r * r - foot2) / len2).sqrt();
    let (s, e) = ((t0 - half).max(0.0), (t0 + half).min(1.0));
    (s <= e).then_some((s, e))
}

/// Length of `[a, b] ∩ S`, the part of the segment inside the defect union.
pub fn covered_length(cs: &ClusterSet, a: &[f64], b: &[f64]) -> f64 {
    let cfg = cs.config();
    let r = cfg.radius();
    let lo: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.min(*y) - r).collect();
    let hi: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.max(*y) + r).collect();
    let mut iv: Vec<(f64, f64)> = Vec::new();
    cs.index().for_each_in_box(&lo, &hi, |i| {
        if let Some(ch) = chord(a, b, cfg.center(i), r) {
            iv.push(ch);
        }
    });
    if iv.is_empty() {
        return 0.0;
    }
    iv.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let (mut s, mut e) = iv[0];
    for &(s2, e2) in &iv[1..] {
        if s2 > e {
            total += e - s;
            s = s2;
            e = e2;
        } else {
            e = e.max(e2);
        }
    }
    total += e - s;
    total.min(1.0) * dist(a, b)
}

/// Cost of the straight segment `[a, b]` in the conformal metric: full
/// length outside the defects, `xi` times the length inside.
pub fn segment_cost(cs: &ClusterSet, xi: f64, a: &[f64], b: &[f64]) -> Result<f64> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::invalid("xi", "dilatation factor must lie in [0, 1)"));
    }
    let d = cs.config().dim();
    check_dim(a, d, "a")?;
    check_dim(b, d, "b")?;
    Ok(segment_cost_unchecked(cs, xi, a, b))
}

pub(crate) fn segment_cost_unchecked(cs: &ClusterSet, xi: f64, a: &[f64], b: &[f64]) -> f64 {
    let len = dist(a, b);
    (len - (1.0 - xi) * covered_length(cs, a, b)).max(xi * len)
}
