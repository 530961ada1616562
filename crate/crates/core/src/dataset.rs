//! Dataset rows and writers shared by the CLI and downstream plotting.
//!
//! Every dataset is written either as CSV with a header row or as one JSON
//! object per line, with identical field names and order.

use std::fmt::Display;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::experiments::{Metrics, SweepResult};
use crate::scaling::{self, ModelError, ScalingParams, WorkloadProfile};

/// Header of run and sweep datasets.
pub const RUN_HEADER: &str =
    "param,total_time,payload_time,nonpayload_time,idle_time,bus_busy,efficiency,speedup,energy_proxy";
/// Header of analytic curve datasets.
pub const MODEL_HEADER: &str = "n,speedup1,speedup2,efficiency,payload_perf";
/// Header of preset (roofline) datasets.
pub const PROFILE_HEADER: &str = "profile,n,speedup1,speedup2,efficiency,payload_perf";
/// Header of efficiency-surface datasets.
pub const SURFACE_HEADER: &str = "s,n,efficiency";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Tabular,
    StructuredRecords,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub param: String,
    pub total_time: u64,
    pub payload_time: u64,
    pub nonpayload_time: u64,
    pub idle_time: u64,
    pub bus_busy: u64,
    pub efficiency: f64,
    pub speedup: f64,
    pub energy_proxy: u64,
}

impl RunRow {
    pub fn new(param: impl Display, m: &Metrics) -> Self {
        Self {
            param: param.to_string(),
            total_time: m.total_time,
            payload_time: m.payload_time,
            nonpayload_time: m.nonpayload_time,
            idle_time: m.idle_time,
            bus_busy: m.bus_busy_total(),
            efficiency: m.efficiency,
            speedup: m.speedup,
            energy_proxy: m.energy_proxy,
        }
    }

    pub fn from_sweep(sweep: &SweepResult) -> Vec<Self> {
        sweep.points.iter().map(|p| Self::new(p.value, &p.metrics)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub n: u64,
    pub speedup1: f64,
    pub speedup2: f64,
    pub efficiency: f64,
    pub payload_perf: f64,
}

impl ModelRow {
    pub fn evaluate(params: &ScalingParams<f64>, n: u64) -> Result<Self, ModelError> {
        let x = n as f64;
        Ok(Self {
            n,
            speedup1: scaling::speedup_first_order(params, x)?,
            speedup2: scaling::speedup_second_order(params, x)?,
            efficiency: scaling::efficiency(params, x)?,
            payload_perf: scaling::payload_performance(params, x)?,
        })
    }

    pub fn curve(params: &ScalingParams<f64>, ns: &[u64]) -> Result<Vec<Self>, ModelError> {
        ns.iter().map(|&n| Self::evaluate(params, n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub profile: String,
    pub n: u64,
    pub speedup1: f64,
    pub speedup2: f64,
    pub efficiency: f64,
    pub payload_perf: f64,
}

impl ProfileRow {
    pub fn roofline(profiles: &[WorkloadProfile<f64>], ns: &[u64]) -> Result<Vec<Self>, ModelError> {
        let mut rows = Vec::with_capacity(profiles.len() * ns.len());
        for profile in profiles {
            for row in ModelRow::curve(&profile.params, ns)? {
                rows.push(Self {
                    profile: profile.name.clone(),
                    n: row.n,
                    speedup1: row.speedup1,
                    speedup2: row.speedup2,
                    efficiency: row.efficiency,
                    payload_perf: row.payload_perf,
                });
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub s: f64,
    pub n: u64,
    pub efficiency: f64,
}

impl SurfaceRow {
    pub fn grid(s_values: &[f64], ns: &[u64], overhead_coeff: f64) -> Result<Vec<Self>, ModelError> {
        let n_real: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let grid = scaling::efficiency_surface(s_values, &n_real, overhead_coeff)?;
        Ok(s_values
            .iter()
            .zip(grid)
            .flat_map(|(&s, row)| {
                ns.iter()
                    .zip(row)
                    .map(move |(&n, efficiency)| Self { s, n, efficiency })
            })
            .collect())
    }
}

/// Writes `rows` in `format`. An empty CSV still carries no header, so callers
/// always pass at least one row.
pub fn write_rows<R: Serialize, W: Write>(rows: &[R], format: Format, out: W) -> io::Result<()> {
    match format {
        Format::Tabular => {
            let mut writer = csv::Writer::from_writer(out);
            for row in rows {
                writer.serialize(row)?;
            }
            writer.flush()
        }
        Format::StructuredRecords => {
            let mut out = out;
            for row in rows {
                serde_json::to_writer(&mut out, row)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header<R: Serialize>(rows: &[R]) -> String {
        let mut buf = Vec::new();
        write_rows(rows, Format::Tabular, &mut buf).unwrap();
        String::from_utf8(buf).unwrap().lines().next().unwrap().to_owned()
    }

    #[test]
    fn headers_match_schema() {
        let params = ScalingParams::new(0.0, 0.01, 1.0).unwrap();
        assert_eq!(header(&ModelRow::curve(&params, &[1, 2]).unwrap()), MODEL_HEADER);
        let presets = WorkloadProfile::presets();
        assert_eq!(header(&ProfileRow::roofline(&presets, &[1]).unwrap()), PROFILE_HEADER);
        assert_eq!(
            header(&SurfaceRow::grid(&[0.1], &[1, 10], 0.0).unwrap()),
            SURFACE_HEADER
        );
    }

    #[test]
    fn records_are_one_object_per_line() {
        let params = ScalingParams::new(0.0, 0.0, 1.0).unwrap();
        let rows = ModelRow::curve(&params, &[1, 4]).unwrap();
        let mut buf = Vec::new();
        write_rows(&rows, Format::StructuredRecords, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            r#"{"n":4,"speedup1":4.0,"speedup2":4.0,"efficiency":1.0,"payload_perf":4.0}"#
        );
    }

    #[test]
    fn surface_layout() {
        let rows = SurfaceRow::grid(&[0.0, 0.5], &[1, 100], 0.0).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[2].s, rows[2].n, rows[2].efficiency), (0.5, 1, 1.0));
        assert!((rows[3].efficiency - 0.0198).abs() < 1e-4);
    }
}
