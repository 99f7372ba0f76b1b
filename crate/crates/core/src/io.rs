//! Realization dumps: one CSV row per defect center, header `x0,x1,…`.
//! Centers are in rescaled coordinates (radius-1 balls).

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::estimators::fmt;
use crate::model::PointConfiguration;

pub fn write_centers_csv<W: Write>(cfg: &PointConfiguration, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((0..cfg.dim()).map(|k| format!("x{k}")))?;
    for c in cfg.centers() {
        w.write_record(c.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_centers_csv<R: Read>(input: R) -> Result<PointConfiguration> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let d = header.len();
    for (k, h) in header.iter().enumerate() {
        if h.trim() != format!("x{k}") {
            return Err(Error::invalid("header", format!("column {k} must be named x{k}, found `{h}`")));
        }
    }
    let mut cfg = PointConfiguration::new(d, 1.0)?;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let p: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("row {}", line + 1), e.to_string()))?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("row {}", line + 1), "coordinates must be finite"));
        }
        cfg.push(&p)
            .map_err(|e| Error::invalid(format!("row {}", line + 1), e.to_string()))?;
    }
    Ok(cfg)
}
