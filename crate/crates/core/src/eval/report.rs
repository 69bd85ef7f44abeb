use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::format_float;
use crate::error::{Error, Result};

/// One measured value in long format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub method: String,
    pub setting: String,
    pub replicate: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub setting: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over replicates divided by `sqrt(n)`.
    pub se: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub replicates: usize,
    pub seeds: Vec<u64>,
    pub records: Vec<Record>,
    /// Wall-clock seconds per phase, summed over replicates.
    pub timings: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn new(protocol: impl Into<String>) -> Self {
        Self {
            protocol: protocol.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, method: impl Into<String>, setting: impl Into<String>, replicate: usize, value: f64) {
        self.records.push(Record {
            method: method.into(),
            setting: setting.into(),
            replicate,
            value,
        });
    }

    pub fn add_time(&mut self, phase: &str, secs: f64) {
        *self.timings.entry(phase.to_string()).or_insert(0.0) += secs;
    }

    /// Values for one (method, setting) cell in replicate order.
    pub fn values(&self, method: &str, setting: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.setting == setting)
            .map(|r| r.value)
            .collect()
    }

    /// Mean and standard error per (method, setting), in first-seen order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in &self.records {
            let key = (r.method.as_str(), r.setting.as_str());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(method, setting)| {
                let v = self.values(method, setting);
                let n = v.len();
                let mean = v.iter().sum::<f64>() / n as f64;
                let se = if n > 1 {
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
                SummaryRow {
                    method: method.to_string(),
                    setting: setting.to_string(),
                    n,
                    mean,
                    se,
                }
            })
            .collect()
    }

    /// Long format: `protocol,method,setting,replicate,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["protocol", "method", "setting", "replicate", "value"])?;
        for r in &self.records {
            w.write_record([
                self.protocol.as_str(),
                &r.method,
                &r.setting,
                &r.replicate.to_string(),
                &format_float(r.value),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "protocol": self.protocol,
            "replicates": self.replicates,
            "seeds": self.seeds,
            "summary": self.summary(),
            "timings_secs": self.timings,
        })
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let json_path = json_path.as_ref();
        self.write_csv(File::create(csv_path).map_err(|e| Error::io(csv_path, e))?)?;
        let file = File::create(json_path).map_err(|e| Error::io(json_path, e))?;
        serde_json::to_writer_pretty(file, &self.summary_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let mut r = EvalReport::new("demo");
        r.push("a", "s", 0, 1.0);
        r.push("b", "s", 0, 5.0);
        r.push("a", "s", 1, 3.0);
        let s = r.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].method, "a");
        assert_eq!(s[0].mean, 2.0);
        // sd = sqrt(2), se = sqrt(2) / sqrt(2)
        assert!((s[0].se - 1.0).abs() < 1e-12);
        assert_eq!(s[1].se, 0.0);
    }

    #[test]
    fn csv_layout() {
        let mut r = EvalReport::new("demo");
        r.push("lmdi-plus", "pve=0.4", 2, 0.75);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "protocol,method,setting,replicate,value\ndemo,lmdi-plus,pve=0.4,2,0.75\n"
        );
    }
}
