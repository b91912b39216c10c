//! Tabular experiment output.

use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Sweep parameters, e.g. `alpha`, `beta`.
    pub params: Vec<(String, f64)>,
    pub metrics: Vec<(String, f64)>,
}

impl ReportRow {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub n1: usize,
    pub n2: usize,
    pub seed: Option<u64>,
    /// Hex SHA-256 of the canonical experiment configuration.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub rows: Vec<ReportRow>,
    pub meta: ReportMeta,
}

pub fn config_hash(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// SHA-256 of the little-endian bytes of `values`.
pub fn data_digest(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, meta: ReportMeta) -> Self {
        Self { experiment: experiment.into(), rows: Vec::new(), meta }
    }

    /// Append a row. All rows must share the column layout of the first and
    /// every metric must be finite.
    pub fn push(&mut self, params: &[(&str, f64)], metrics: &[(&str, f64)]) -> Result<()> {
        let row = ReportRow {
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        if let Some((name, v)) = row.metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::param(format!("metric {name} is not finite ({v})")));
        }
        if let Some(first) = self.rows.first() {
            let same = |a: &[(String, f64)], b: &[(String, f64)]| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0 == y.0)
            };
            if !same(&first.params, &row.params) || !same(&first.metrics, &row.metrics) {
                return Err(Error::param("report rows must share one column layout"));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.param(name).or_else(|| r.metric(name)))
            .collect()
    }

    pub fn last(&self) -> Option<&ReportRow> {
        self.rows.last()
    }

    /// CSV with header `experiment,<params>,<metrics>,n1,n2,seed,config_hash`.
    /// Floats use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["experiment".to_string()];
        if let Some(first) = self.rows.first() {
            header.extend(first.params.iter().map(|(k, _)| k.clone()));
            header.extend(first.metrics.iter().map(|(k, _)| k.clone()));
        }
        header.extend(["n1", "n2", "seed", "config_hash"].map(String::from));
        wtr.write_record(&header)?;
        let seed = self.meta.seed.map_or(String::new(), |s| s.to_string());
        for row in &self.rows {
            let mut rec = vec![self.experiment.clone()];
            rec.extend(row.params.iter().map(|(_, v)| format!("{v:?}")));
            rec.extend(row.metrics.iter().map(|(_, v)| format!("{v:?}")));
            rec.extend([
                self.meta.n1.to_string(),
                self.meta.n2.to_string(),
                seed.clone(),
                self.meta.config_hash.clone(),
            ]);
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}
