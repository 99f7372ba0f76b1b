//! JSON experiment descriptions and their dispatch.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::convergence::{
    distortion_experiment, measure_experiment, surjectivity_experiment, ConvergenceSetup, PairedReport,
    TestFunction,
};
use super::coupling::coupled_monotonicity;
use super::eta::{estimate_eta, EtaOptions};
use super::geodesic::geodesic_deviation;
use super::tail::cluster_tail;
use super::threshold::threshold_scan;
use super::volume::estimate_volume_fraction;
use super::{check_replicas, check_subcritical_u, fmt, CsvTable, EstimateRecord};
use crate::error::{Error, Result};
use crate::limits::{EtaEntry, EtaTable};
use crate::model::{default_u_star, DomainSpec, IntensitySpec, SimParams};

pub const SCHEMA: u32 = 1;

fn schema_one() -> u32 {
    SCHEMA
}
fn k_default() -> usize {
    16
}
fn probes_default() -> usize {
    100_000
}
fn pair_cap_default() -> usize {
    10_000
}
fn quadrature_default() -> usize {
    256
}

/// A scalar or a list of intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UList {
    One(f64),
    Many(Vec<f64>),
}

impl UList {
    pub fn values(&self) -> Vec<f64> {
        match self {
            UList::One(u) => vec![*u],
            UList::Many(v) => v.clone(),
        }
    }
}

/// Inline table or a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableSource {
    Inline(EtaTable),
    Path(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaConfig {
    pub d: usize,
    #[serde(default)]
    pub xi: f64,
    pub u: UList,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub replicas: usize,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default = "k_default", rename = "K")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeConfig {
    pub d: usize,
    #[serde(default)]
    pub xi: f64,
    pub u: f64,
    pub side: f64,
    #[serde(default = "probes_default")]
    pub probes: usize,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    pub d: usize,
    pub u: f64,
    pub lengths: Vec<f64>,
    pub replicas: usize,
    #[serde(default)]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    pub d: usize,
    pub u: f64,
    pub side: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub d: usize,
    pub u_grid: Vec<f64>,
    pub sides: Vec<f64>,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub d: usize,
    #[serde(default)]
    pub xi: f64,
    pub u_low: f64,
    pub u_high: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub replicas: usize,
    #[serde(default = "k_default", rename = "K")]
    pub k: usize,
}

/// Fields shared by the convergence experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSetup {
    pub domain: DomainSpec,
    pub intensity: IntensitySpec,
    #[serde(default)]
    pub xi: f64,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub replicas: usize,
    #[serde(default = "k_default", rename = "K")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionConfig {
    #[serde(flatten)]
    pub setup: FieldSetup,
    pub table: TableSource,
    /// Defaults to a tenth of the domain diameter.
    #[serde(default)]
    pub net_spacing: Option<f64>,
    /// Defaults to the shortest bounding-box side over 128.
    #[serde(default)]
    pub grid_spacing: Option<f64>,
    #[serde(default = "pair_cap_default")]
    pub pair_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    #[serde(flatten)]
    pub setup: FieldSetup,
    pub test_functions: Vec<TestFunction>,
    #[serde(default = "probes_default")]
    pub probes: usize,
    #[serde(default = "quadrature_default")]
    pub quadrature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurjectivityConfig {
    #[serde(flatten)]
    pub setup: FieldSetup,
    pub probe_spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Eta(EtaConfig),
    Volume(VolumeConfig),
    Geodesic(GeodesicConfig),
    ClusterTail(TailConfig),
    Threshold(ThresholdConfig),
    Coupling(CouplingConfig),
    Distortion(DistortionConfig),
    Measure(MeasureConfig),
    Surjectivity(SurjectivityConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Eta(_) => "eta",
            Experiment::Volume(_) => "volume",
            Experiment::Geodesic(_) => "geodesic",
            Experiment::ClusterTail(_) => "cluster_tail",
            Experiment::Threshold(_) => "threshold",
            Experiment::Coupling(_) => "coupling",
            Experiment::Distortion(_) => "distortion",
            Experiment::Measure(_) => "measure",
            Experiment::Surjectivity(_) => "surjectivity",
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Experiment::Eta(c) => Some(c.d),
            Experiment::Volume(c) => Some(c.d),
            Experiment::Geodesic(c) => Some(c.d),
            Experiment::ClusterTail(c) => Some(c.d),
            Experiment::Threshold(c) => Some(c.d),
            Experiment::Coupling(c) => Some(c.d),
            Experiment::Distortion(_) | Experiment::Measure(_) | Experiment::Surjectivity(_) => None,
        }
    }
}

/// One experiment plus its seed and threshold settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "schema_one")]
    pub schema: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Subcritical threshold; defaults per dimension.
    #[serde(default)]
    pub u_star: Option<f64>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

/// Results of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub records: Vec<EstimateRecord>,
    pub csv: CsvTable,
    pub extra: Value,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn dimension(&self) -> Result<usize> {
        match self.experiment.dim() {
            Some(d) => Ok(d),
            None => Ok(self.field_setup().expect("field experiment").domain.build()?.dim()),
        }
    }

    fn field_setup(&self) -> Option<&FieldSetup> {
        match &self.experiment {
            Experiment::Distortion(c) => Some(&c.setup),
            Experiment::Measure(c) => Some(&c.setup),
            Experiment::Surjectivity(c) => Some(&c.setup),
            _ => None,
        }
    }

    pub fn u_star(&self) -> Result<f64> {
        if let Some(u) = self.u_star {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::invalid("u_star", "must be positive"));
            }
            return Ok(u);
        }
        let d = self.dimension()?;
        default_u_star(d).ok_or_else(|| Error::invalid("u_star", format!("no default for d = {d}; set it explicitly")))
    }

    /// Checks that do not need any sampling.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::invalid("schema", format!("unsupported schema {}, expected {SCHEMA}", self.schema)));
        }
        let d = self.dimension()?;
        if d < 2 {
            return Err(Error::invalid("d", "dimension must be at least 2"));
        }
        let u_star = self.u_star()?;
        match &self.experiment {
            Experiment::Eta(c) => {
                SimParams::new(c.d, c.xi, 1.0)?;
                for u in c.u.values() {
                    check_subcritical_u(u, u_star, "u")?;
                }
                check_replicas(c.replicas, 2)?;
                if c.r.is_empty() {
                    return Err(Error::invalid("R", "at least one scale is required"));
                }
            }
            Experiment::Volume(c) => {
                SimParams::new(c.d, c.xi, 1.0)?;
                check_subcritical_u(c.u, u_star, "u")?;
                check_replicas(c.replicas, 2)?;
            }
            Experiment::Geodesic(c) => {
                check_subcritical_u(c.u, u_star, "u")?;
                check_replicas(c.replicas, 2)?;
            }
            Experiment::ClusterTail(c) => {
                check_subcritical_u(c.u, u_star, "u")?;
                check_replicas(c.replicas, 1)?;
            }
            Experiment::Threshold(c) => check_replicas(c.replicas, 1)?,
            Experiment::Coupling(c) => {
                SimParams::new(c.d, c.xi, 1.0)?;
                check_subcritical_u(c.u_low, u_star, "u_low")?;
                check_subcritical_u(c.u_high, u_star, "u_high")?;
                if c.u_low > c.u_high {
                    return Err(Error::invalid("u_low", "must not exceed u_high"));
                }
                check_replicas(c.replicas, 2)?;
            }
            Experiment::Distortion(_) | Experiment::Measure(_) | Experiment::Surjectivity(_) => {
                self.convergence_setup(u_star)?.validate()?;
            }
        }
        Ok(())
    }

    fn convergence_setup(&self, u_star: f64) -> Result<ConvergenceSetup> {
        let s = self.field_setup().expect("field experiment");
        Ok(ConvergenceSetup {
            domain: s.domain.build()?,
            field: s.intensity.build()?,
            xi: s.xi,
            r_list: s.r.clone(),
            replicas: s.replicas,
            u_star,
            k: s.k,
        })
    }
}

fn paired_csv(report: &PairedReport, r_list: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(&["R", "replica", "value"]);
    for (rec, r) in report.records.iter().zip(r_list) {
        for (i, v) in rec.per_replica.iter().flatten().enumerate() {
            t.push(vec![fmt(*r), i.to_string(), fmt(*v)]);
        }
    }
    t
}

/// Runs an experiment; relative table paths resolve against `base_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64, base_dir: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let u_star = cfg.u_star()?;
    match &cfg.experiment {
        Experiment::Eta(c) => {
            let params = SimParams::new(c.d, c.xi, 1.0)?;
            let opts = EtaOptions {
                margin: c.margin,
                half_width: c.half_width,
                k: c.k,
                ..EtaOptions::default()
            };
            let mut csv = CsvTable::new(&["u", "R", "replica", "value"]);
            let mut records = Vec::new();
            let mut entries = Vec::new();
            let mut fits = Vec::new();
            for (ui, u) in c.u.values().into_iter().enumerate() {
                let est = estimate_eta(u, &params, &c.r, c.replicas, u_star, seed, (ui as u64) << 16, &opts)?;
                for rec in &est.records {
                    let r = rec.params["R"].as_f64().unwrap_or(f64::NAN);
                    for (i, v) in rec.per_replica.iter().flatten().enumerate() {
                        csv.push(vec![fmt(u), fmt(r), i.to_string(), fmt(*v)]);
                    }
                }
                fits.push(json!({"u": u, "fit": est.fit.map(|(a, b)| json!({"a": a, "b": b}))}));
                entries.push(est.entry);
                records.extend(est.records);
            }
            entries.sort_by(|a, b| a.u.total_cmp(&b.u));
            entries.dedup_by(|a, b| a.u == b.u);
            if entries.first().is_none_or(|e| e.u > 0.0) {
                entries.insert(0, EtaEntry { u: 0.0, eta: 1.0, stderr: 0.0 });
            }
            let table = EtaTable {
                d: c.d,
                xi: c.xi,
                entries,
                scale: *c.r.last().unwrap(),
                replicas: c.replicas,
            };
            Ok(Outcome {
                records,
                csv,
                extra: json!({"table": table, "fits": fits}),
            })
        }
        Experiment::Volume(c) => {
            let rec = estimate_volume_fraction(c.u, c.d, c.xi, c.side, c.probes, c.replicas, seed, 0)?;
            let mut csv = CsvTable::new(&["replica", "value"]);
            for (i, v) in rec.per_replica.iter().flatten().enumerate() {
                csv.push(vec![i.to_string(), fmt(*v)]);
            }
            Ok(Outcome {
                records: vec![rec],
                csv,
                extra: Value::Null,
            })
        }
        Experiment::Geodesic(c) => {
            let params = SimParams::new(c.d, 0.0, 1.0)?;
            let recs = geodesic_deviation(c.u, &params, &c.lengths, c.replicas, u_star, seed, 0, c.margin)?;
            let mut csv = CsvTable::new(&["L", "replica", "value"]);
            for (rec, l) in recs.iter().zip(&c.lengths) {
                for (i, v) in rec.per_replica.iter().flatten().enumerate() {
                    csv.push(vec![fmt(*l), i.to_string(), fmt(*v)]);
                }
            }
            Ok(Outcome {
                records: recs,
                csv,
                extra: Value::Null,
            })
        }
        Experiment::ClusterTail(c) => {
            let (rec, fit, per) = cluster_tail(c.u, c.d, c.side, c.replicas, u_star, seed, 0)?;
            let mut csv = CsvTable::new(&["replica", "cluster", "diameter"]);
            for (i, ds) in per.iter().enumerate() {
                for (k, v) in ds.iter().enumerate() {
                    csv.push(vec![i.to_string(), k.to_string(), fmt(*v)]);
                }
            }
            Ok(Outcome {
                records: vec![rec],
                csv,
                extra: serde_json::to_value(&fit)?,
            })
        }
        Experiment::Threshold(c) => {
            let rep = threshold_scan(&c.u_grid, c.d, &c.sides, c.replicas, seed, 0)?;
            let mut csv = CsvTable::new(&["side", "replica", "u", "crossed"]);
            for (side, reps) in c.sides.iter().zip(&rep.per_replica) {
                for (i, v) in reps.iter().enumerate() {
                    for (u, x) in c.u_grid.iter().zip(v) {
                        csv.push(vec![fmt(*side), i.to_string(), fmt(*u), (*x as u8).to_string()]);
                    }
                }
            }
            Ok(Outcome {
                records: Vec::new(),
                csv,
                extra: serde_json::to_value(&rep)?,
            })
        }
        Experiment::Coupling(c) => {
            let params = SimParams::new(c.d, c.xi, 1.0)?;
            let rep = coupled_monotonicity(c.u_low, c.u_high, &params, c.l, c.replicas, u_star, c.k, seed, 0)?;
            let mut csv = CsvTable::new(&["replica", "low", "high"]);
            let lo = rep.low.per_replica.clone().unwrap_or_default();
            let hi = rep.high.per_replica.clone().unwrap_or_default();
            for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
                csv.push(vec![i.to_string(), fmt(*a), fmt(*b)]);
            }
            Ok(Outcome {
                records: vec![rep.low, rep.high],
                csv,
                extra: json!({"passes": rep.passes, "replicas": rep.replicas}),
            })
        }
        Experiment::Distortion(c) => {
            let setup = cfg.convergence_setup(u_star)?;
            let table = match &c.table {
                TableSource::Inline(t) => t.clone(),
                TableSource::Path(p) => EtaTable::from_json(&std::fs::read_to_string(base_dir.join(p))?)?,
            };
            let bb = setup.domain.bounding_box();
            let net = c.net_spacing.unwrap_or(setup.domain.diameter() / 10.0);
            let h = c
                .grid_spacing
                .unwrap_or((0..bb.dim()).map(|k| bb.side(k)).fold(f64::INFINITY, f64::min) / 128.0);
            let rep = distortion_experiment(&setup, &table, net, h, c.pair_cap, seed, 0)?;
            Ok(Outcome {
                csv: paired_csv(&rep, &setup.r_list),
                extra: json!({"decrease_fraction": rep.decrease_fraction}),
                records: rep.records,
            })
        }
        Experiment::Measure(c) => {
            let setup = cfg.convergence_setup(u_star)?;
            let (rep, per_f) = measure_experiment(&setup, &c.test_functions, c.probes, c.quadrature, seed, 0)?;
            let mut csv = CsvTable::new(&["R", "function", "replica", "value"]);
            for (k, rec) in per_f.iter().enumerate() {
                let r = setup.r_list[k / c.test_functions.len()];
                for (i, v) in rec.per_replica.iter().flatten().enumerate() {
                    csv.push(vec![fmt(r), (k % c.test_functions.len()).to_string(), i.to_string(), fmt(*v)]);
                }
            }
            let mut records = rep.records;
            records.extend(per_f);
            Ok(Outcome {
                records,
                csv,
                extra: json!({"decrease_fraction": rep.decrease_fraction}),
            })
        }
        Experiment::Surjectivity(c) => {
            let setup = cfg.convergence_setup(u_star)?;
            let rep = surjectivity_experiment(&setup, c.probe_spacing, seed, 0)?;
            Ok(Outcome {
                csv: paired_csv(&rep, &setup.r_list),
                extra: json!({"decrease_fraction": rep.decrease_fraction}),
                records: rep.records,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_supercritical() {
        let ok = r#"{"schema":1,"kind":"eta","d":2,"u":[0.0,0.1],"R":[20],"replicas":2}"#;
        let cfg = ExperimentConfig::from_json(ok).unwrap();
        assert_eq!(cfg.experiment.kind(), "eta");
        let bad = r#"{"kind":"eta","d":2,"u":0.4,"R":[20],"replicas":2}"#;
        match ExperimentConfig::from_json(bad) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "u"),
            other => panic!("{other:?}"),
        }
        let schema = r#"{"schema":2,"kind":"volume","d":2,"u":0.1,"side":5,"replicas":2}"#;
        assert!(ExperimentConfig::from_json(schema).is_err());
    }

    #[test]
    fn eta_run_builds_a_table() {
        let cfg = ExperimentConfig::from_json(r#"{"kind":"eta","d":2,"u":[0.1],"R":[10],"replicas":3}"#).unwrap();
        let out = run_experiment(&cfg, 4, Path::new(".")).unwrap();
        let table: EtaTable = serde_json::from_value(out.extra["table"].clone()).unwrap();
        assert_eq!(table.entries.len(), 2);
        assert_eq!(table.entries[0].eta, 1.0);
        assert_eq!(out.csv.rows.len(), 3);
    }

    #[test]
    fn field_experiment_parses() {
        let text = r#"{"kind":"surjectivity","domain":{"box":[[0,1],[0,1]]},
            "intensity":{"constant":0.1},"R":[5,10],"replicas":2,"probe_spacing":0.1}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let out = run_experiment(&cfg, 1, Path::new(".")).unwrap();
        assert_eq!(out.csv.rows.len(), 4);
    }
}
