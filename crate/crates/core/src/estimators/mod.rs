//! Monte Carlo campaigns: each estimator samples independent replicas on
//! their own random streams, computes a statistic per replica and reduces
//! the values into an [`EstimateRecord`].
//!
//! Replica `i` of task `t` always draws from
//! `RngStream::for_replica(seed, t, i)`, and per-replica values are
//! collected in replica order, so results do not depend on the number of
//! worker threads.

mod config;
mod convergence;
mod coupling;
mod eta;
mod geodesic;
mod tail;
mod threshold;
mod volume;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::sampler::RngStream;

pub use config::{run_experiment, Experiment, ExperimentConfig, Outcome, UList};
pub use convergence::{
    depth_to_vacant, distortion_experiment, measure_experiment, net_points, surjectivity_experiment,
    ConvergenceSetup, PairedReport, TestFunction,
};
pub use coupling::{coupled_monotonicity, CouplingReport};
pub use eta::{eta_box, estimate_eta, EtaEstimate, EtaOptions};
pub use geodesic::{geodesic_deviation, hausdorff_to_segment};
pub use tail::{cluster_tail, TailFit};
pub use threshold::{threshold_scan, CrossingRow, ThresholdReport};
pub use volume::{estimate_volume_fraction, weighted_vacant_probes};

/// Summary of one estimated quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub name: String,
    pub params: Value,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    /// 5%, 50% and 95% sample quantiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<[f64; 3]>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_replica: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, Value>,
}

impl EstimateRecord {
    /// Record over per-replica values; `stderr` is `sd / √n` and is zero
    /// for fewer than two values.
    pub fn from_values(name: impl Into<String>, params: Value, seed: u64, values: &[f64]) -> Self {
        let m = Moments::from_slice(values);
        EstimateRecord {
            name: name.into(),
            params,
            n: values.len(),
            mean: m.mean(),
            stderr: m.stderr(),
            quantiles: if values.is_empty() {
                None
            } else {
                Some([quantile(values, 0.05), quantile(values, 0.5), quantile(values, 0.95)])
            },
            seed,
            per_replica: Some(values.to_vec()),
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.diagnostics
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn median(&self) -> Option<f64> {
        self.quantiles.map(|q| q[1])
    }
}

/// Streaming count, mean and sum of squared deviations.
///
/// Merging uses the pairwise update of Chan et al.; results agree with a
/// single pass over the concatenated data up to rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut m = Moments::default();
        for &v in values {
            m.push(v);
        }
        m
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (a, b) = (self.n as f64, other.n as f64);
        Moments {
            n,
            mean: self.mean + delta * b / n as f64,
            m2: self.m2 + other.m2 + delta * delta * a * b / n as f64,
        }
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" rule).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Least-squares line `y = a + b x`; returns `(a, b, r²)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((my - b * mx, b, r2))
}

/// Runs `f` on replicas `0..n` of `task`, in parallel, returning results in
/// replica order.
pub fn replicate<T, F>(seed: u64, task: u64, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &RngStream) -> Result<T> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| f(i, &RngStream::for_replica(seed, task, i)))
        .collect()
}

pub(crate) fn check_replicas(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::invalid("replicas", format!("at least {min} replicas are required")));
    }
    Ok(())
}

pub(crate) fn check_subcritical_u(u: f64, u_star: f64, field: &str) -> Result<()> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::invalid(field, "intensity must be finite and nonnegative"));
    }
    if u >= u_star {
        return Err(Error::invalid(
            field,
            format!("intensity {u} is not below the subcritical threshold u* = {u_star}"),
        ));
    }
    Ok(())
}

/// Per-replica table written as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip formatting used in every CSV cell.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
