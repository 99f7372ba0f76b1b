//! Poisson point process realizations.
//!
//! Counts are drawn exactly (multiplication method for small means,
//! transformed rejection for large ones) and locations uniformly. Every
//! realization is a pure function of its [`RngStream`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{BoxRegion, IntensityField, MarkedConfiguration, PointConfiguration};

/// Identifies one reproducible random stream.
///
/// The generator is ChaCha8 keyed by `seed ⊕ splitmix64(stream_id)`, which is
/// portable across platforms and architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Stream for replica `replica` of sub-task `task` (an R value, a side
    /// length, …). Tasks get disjoint id ranges.
    pub fn for_replica(seed: u64, task: u64, replica: u64) -> Self {
        RngStream {
            seed,
            stream_id: (task << 32) | (replica & 0xffff_ffff),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ splitmix64(self.stream_id))
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Exact Poisson variate with mean `mean ≥ 0`.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::invalid("mean", "Poisson mean must be finite and nonnegative"));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::invalid("mean", e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}

fn uniform_in<R: Rng + ?Sized>(region: &BoxRegion, rng: &mut R, out: &mut [f64]) {
    for (k, v) in out.iter_mut().enumerate() {
        *v = region.lo[k] + rng.random::<f64>() * region.side(k);
    }
}

/// Homogeneous process of intensity `u` on `region`, radius-1 balls.
pub fn sample_homogeneous<R: Rng + ?Sized>(
    u: f64,
    region: &BoxRegion,
    rng: &mut R,
) -> Result<PointConfiguration> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::invalid("u", "intensity must be finite and nonnegative"));
    }
    let d = region.dim();
    let n = poisson_count(u * region.volume(), rng)?;
    let mut cfg = PointConfiguration::new(d, 1.0)?;
    let mut p = vec![0.0; d];
    for _ in 0..n {
        uniform_in(region, rng, &mut p);
        cfg.push_unchecked(&p);
    }
    Ok(cfg)
}

/// Inhomogeneous process by thinning a homogeneous one at the field's sup.
pub fn sample_inhomogeneous<R: Rng + ?Sized>(
    field: &IntensityField,
    region: &BoxRegion,
    rng: &mut R,
) -> Result<PointConfiguration> {
    let d = region.dim();
    let sup = field.sup_value();
    let mut cfg = PointConfiguration::new(d, 1.0)?;
    if sup == 0.0 {
        return Ok(cfg);
    }
    let n = poisson_count(sup * region.volume(), rng)?;
    let mut p = vec![0.0; d];
    for _ in 0..n {
        uniform_in(region, rng, &mut p);
        let keep = rng.random::<f64>() * sup;
        if keep < field.eval(&p)? {
            cfg.push_unchecked(&p);
        }
    }
    Ok(cfg)
}

/// Marked process on `region × [0, u_max)`, spatial rate `u_max`.
pub fn sample_marked<R: Rng + ?Sized>(
    region: &BoxRegion,
    u_max: f64,
    rng: &mut R,
) -> Result<MarkedConfiguration> {
    if !(u_max > 0.0 && u_max.is_finite()) {
        return Err(Error::invalid("u_max", "mark range must be positive and finite"));
    }
    let d = region.dim();
    let n = poisson_count(u_max * region.volume(), rng)?;
    let mut cfg = PointConfiguration::new(d, 1.0)?;
    let mut marks = Vec::with_capacity(n as usize);
    let mut p = vec![0.0; d];
    for _ in 0..n {
        uniform_in(region, rng, &mut p);
        cfg.push_unchecked(&p);
        marks.push(rng.random::<f64>() * u_max);
    }
    MarkedConfiguration::new(cfg, marks, u_max)
}

/// Keeps exactly the centers whose mark is at most `u(center)`.
pub fn restrict(marked: &MarkedConfiguration, field: &IntensityField) -> Result<PointConfiguration> {
    let pts = marked.points();
    let mut out = PointConfiguration::new(pts.dim(), pts.radius())?;
    for (c, m) in pts.centers().zip(marked.marks()) {
        if *m <= field.eval(c)? {
            out.push_unchecked(c);
        }
    }
    Ok(out)
}

/// [`restrict`] at a constant level.
pub fn restrict_level(marked: &MarkedConfiguration, u: f64) -> PointConfiguration {
    let pts = marked.points();
    let mut out = PointConfiguration::new(pts.dim(), pts.radius()).expect("valid source configuration");
    for (c, m) in pts.centers().zip(marked.marks()) {
        if *m <= u {
            out.push_unchecked(c);
        }
    }
    out
}

/// Default sampling margin around an experiment box of side `side`: one
/// radius plus the cluster-diameter allowance `10·ln(side)`.
pub fn default_margin(side: f64) -> f64 {
    1.0 + 10.0 * side.max(1.0).ln()
}
