//! The experiment file: a TOML document with `[topology]`, `[workload]`,
//! `[sweep]`, `[model]` and `[output]` sections. All durations are ticks.

use std::path::{Path, PathBuf};

use neurocomm::dataset::Format;
use neurocomm::experiments::{Scenario, SweepParam, TopologySpec, WorkloadSpec};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: Option<TopologySpec>,
    pub workload: Option<WorkloadSpec>,
    pub sweep: Option<SweepSection>,
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub s: Option<f64>,
    pub c: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dataset: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        // toml reports multi-line errors; keep the first line
        toml::from_str(text).map_err(|e| e.message().lines().next().unwrap_or("malformed config").to_owned())
    }

    /// The topology and workload sections, with every duration checked.
    pub fn scenario(&self) -> Result<Scenario, String> {
        let topology = self.topology.clone().ok_or("missing [topology] section")?;
        let workload = self.workload.clone().ok_or("missing [workload] section")?;
        match &topology {
            TopologySpec::Direct { t_link, .. } => positive("topology.t_link", *t_link)?,
            TopologySpec::SharedBus { t_bus, .. } => positive("topology.t_bus", *t_bus)?,
            TopologySpec::Empa(spec) => {
                positive("topology.t_hop", spec.t_hop)?;
                for (level, bus) in spec.buses.iter().enumerate() {
                    positive(&format!("topology.buses[{level}].t_bus"), bus.t_bus)?;
                }
            }
        }
        positive("workload.t_comp", workload.t_comp)?;
        if let Some(period) = workload.grid_period {
            positive("workload.grid_period", period)?;
        }
        Ok(Scenario { topology, workload })
    }

    pub fn sweep(&self) -> Result<(SweepParam, Vec<u64>), String> {
        let section = self.sweep.as_ref().ok_or("missing [sweep] section")?;
        let param: SweepParam = section.parameter.parse().map_err(|e| format!("sweep.parameter: {e}"))?;
        if section.values.is_empty() {
            return Err("sweep.values is empty".into());
        }
        Ok((param, section.values.clone()))
    }
}

fn positive(key: &str, value: u64) -> Result<(), String> {
    if value == 0 {
        Err(format!("{key} must be a positive number of ticks"))
    } else {
        Ok(())
    }
}
