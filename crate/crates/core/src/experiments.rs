//! Runs, metrics, parameter sweeps and model comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Activity, Interval, SimTrace};
use crate::network::{simulate, SimError};
use crate::scaling::{optimal_cores, ModelError, ScalingParams};
use crate::topology::{EmpaSpec, NodeId, Topology, TopologyError};
use crate::workload::{AnalogOffload, Stimulus, TimeModel, Workload, WorkloadError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error("cannot build thread pool: {0}")]
    Pool(String),
}

/// Time split of one entity over `[0, total_time)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EntityTimes {
    pub payload: u64,
    pub nonpayload: u64,
    pub idle: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub total_time: u64,
    pub payload_time: u64,
    pub nonpayload_time: u64,
    pub idle_time: u64,
    pub entities: u32,
    pub per_entity: BTreeMap<NodeId, EntityTimes>,
    pub bus_busy: BTreeMap<String, u64>,
    /// `payload_time / (entities * total_time)`.
    pub efficiency: f64,
    /// Against the workload serialized onto one entity with free transport.
    pub speedup: f64,
    pub energy_proxy: u64,
}

/// Measure of the union of `intervals`.
fn covered(intervals: &mut [Interval]) -> u64 {
    intervals.sort();
    let mut total = 0;
    let mut current: Option<Interval> = None;
    for &iv in intervals.iter() {
        match current {
            Some(ref mut cur) if iv.start <= cur.end => cur.end = cur.end.max(iv.end),
            _ => {
                total += current.map_or(0, |c| c.len());
                current = Some(iv);
            }
        }
    }
    total + current.map_or(0, |c| c.len())
}

impl Metrics {
    /// Derives metrics from a finished run. Waiting for a bus is charged to the
    /// sender, grid deferral to the receiver.
    pub fn from_trace(workload: &Workload, trace: &SimTrace) -> Self {
        let total = trace.final_time.0;
        let mut per_entity = BTreeMap::new();
        for id in workload.node_ids() {
            let spans = trace.activity.get(&id.0).map(Vec::as_slice).unwrap_or_default();
            let payload: u64 = spans
                .iter()
                .filter(|(a, _)| *a == Activity::Compute)
                .map(|(_, iv)| iv.len())
                .sum();
            let mut all: Vec<Interval> = spans.iter().map(|&(_, iv)| iv).collect();
            let busy = covered(&mut all);
            per_entity.insert(
                id,
                EntityTimes {
                    payload,
                    nonpayload: busy - payload,
                    idle: total - busy,
                },
            );
        }
        let sum = |f: fn(&EntityTimes) -> u64| per_entity.values().map(f).sum::<u64>();
        let payload_time = sum(|e| e.payload);
        let entities = per_entity.len() as u32;
        let capacity = u64::from(entities) * total;
        let (efficiency, speedup) = if total == 0 {
            (0.0, 0.0)
        } else {
            (
                payload_time as f64 / capacity as f64,
                payload_time as f64 / total as f64,
            )
        };
        Metrics {
            total_time: total,
            payload_time,
            nonpayload_time: sum(|e| e.nonpayload),
            idle_time: sum(|e| e.idle),
            entities,
            per_entity,
            bus_busy: trace.bus_busy(),
            efficiency,
            speedup,
            energy_proxy: capacity,
        }
    }

    pub fn bus_busy_total(&self) -> u64 {
        self.bus_busy.values().sum()
    }
}

/// Simulates `workload` on `topology` and derives its metrics.
pub fn run_experiment(workload: &Workload, topology: &Topology) -> Result<(Metrics, SimTrace), ExperimentError> {
    let trace = simulate(workload, topology)?;
    Ok((Metrics::from_trace(workload, &trace), trace))
}

fn default_broadcast() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Direct {
        t_link: u64,
        /// Defaults to the number of neurons.
        #[serde(default)]
        nodes: Option<u32>,
    },
    SharedBus {
        t_bus: u64,
        #[serde(default = "default_broadcast")]
        broadcast: bool,
        #[serde(default)]
        nodes: Option<u32>,
    },
    Empa(EmpaSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub layers: Vec<u32>,
    pub t_comp: u64,
    /// Compute time of hidden-layer neurons, when different from `t_comp`.
    #[serde(default)]
    pub hidden_compute: Option<u64>,
    /// Work shared by the hidden neurons in a core-count sweep; defaults to
    /// `t_comp` times the width of the first hidden layer.
    #[serde(default)]
    pub total_work: Option<u64>,
    #[serde(default)]
    pub grid_period: Option<u64>,
    #[serde(default)]
    pub offload: Option<AnalogOffload>,
    /// Explicit virtual ids in fill order, replacing the topology's default placement.
    #[serde(default)]
    pub placement: Option<Vec<NodeId>>,
    /// Replaces the default single stimulus per input neuron at t = 0.
    #[serde(default)]
    pub stimuli: Option<Vec<Stimulus>>,
    /// Reserved for message priority classes; accepted and ignored.
    #[serde(default)]
    pub priority_classes: Option<u32>,
}

/// A workload bound to a topology, as read from an experiment file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub topology: TopologySpec,
    pub workload: WorkloadSpec,
}

impl Scenario {
    pub fn build(&self) -> Result<(Workload, Topology), ExperimentError> {
        let spec = &self.workload;
        let neurons: u32 = spec.layers.iter().sum();
        let topology = match &self.topology {
            TopologySpec::Direct { t_link, nodes } => Topology::direct(nodes.unwrap_or(neurons), *t_link)?,
            TopologySpec::SharedBus {
                t_bus,
                broadcast,
                nodes,
            } => Topology::shared_bus(nodes.unwrap_or(neurons), *t_bus, *broadcast)?,
            TopologySpec::Empa(empa) => Topology::empa(empa.clone())?,
        };
        let slots = match &spec.placement {
            Some(explicit) => explicit.clone(),
            None => topology.placement_slots(),
        };
        let mut workload = Workload::layered(&spec.layers, spec.t_comp, &slots)?;
        if let Some(hidden) = spec.hidden_compute {
            let (first, last) = (
                spec.layers[0] as usize,
                neurons as usize - *spec.layers.last().unwrap() as usize,
            );
            for neuron in &mut workload.neurons_mut()[first..last] {
                neuron.compute_time = hidden;
            }
        }
        if let Some(offload) = spec.offload {
            workload = workload.with_offload(offload);
        }
        if let Some(stimuli) = &spec.stimuli {
            workload = Workload::new(workload.neurons().to_vec(), stimuli.clone(), TimeModel::EventDriven)?;
        }
        if let Some(period) = spec.grid_period {
            workload = workload.with_time_grid(period)?;
        }
        Ok((workload, topology))
    }

    pub fn run(&self) -> Result<(Metrics, SimTrace), ExperimentError> {
        let (workload, topology) = self.build()?;
        run_experiment(&workload, &topology)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Width of every hidden layer, fixed compute per neuron.
    HiddenWidth,
    /// Width of every hidden layer with the hidden work split evenly (strong scaling).
    Cores,
    /// Number of clusters of a clustered topology.
    Clusters,
    /// Message time of the bus (level 1 for clustered topologies).
    TBus,
    GridPeriod,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [
        SweepParam::HiddenWidth,
        SweepParam::Cores,
        SweepParam::Clusters,
        SweepParam::TBus,
        SweepParam::GridPeriod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::HiddenWidth => "hidden_width",
            SweepParam::Cores => "cores",
            SweepParam::Clusters => "clusters",
            SweepParam::TBus => "t_bus",
            SweepParam::GridPeriod => "grid_period",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &Scenario, value: u64) -> Result<Scenario, ExperimentError> {
        let mut out = base.clone();
        let narrow = || u32::try_from(value).map_err(|_| ExperimentError::Sweep(format!("{value} out of range")));
        let layers = out.workload.layers.len();
        match self {
            SweepParam::HiddenWidth | SweepParam::Cores => {
                if layers < 3 {
                    return Err(ExperimentError::Sweep(format!("{} needs a hidden layer", self.name())));
                }
                if value == 0 {
                    return Err(ExperimentError::Sweep("width must be positive".into()));
                }
                if self == SweepParam::Cores {
                    let work = base.workload.total_work.unwrap_or(
                        base.workload.hidden_compute.unwrap_or(base.workload.t_comp)
                            * u64::from(base.workload.layers[1]),
                    );
                    // nearest integer share of the work
                    out.workload.hidden_compute = Some((work + value / 2) / value);
                }
                let width = narrow()?;
                out.workload.layers[1..layers - 1].fill(width);
                if let TopologySpec::Direct { nodes, .. } | TopologySpec::SharedBus { nodes, .. } = &mut out.topology {
                    *nodes = None;
                }
            }
            SweepParam::Clusters => match &mut out.topology {
                TopologySpec::Empa(spec) => spec.clusters = narrow()?,
                _ => {
                    return Err(ExperimentError::Sweep(
                        "clusters sweep needs a clustered topology".into(),
                    ))
                }
            },
            SweepParam::TBus => match &mut out.topology {
                TopologySpec::SharedBus { t_bus, .. } => *t_bus = value,
                TopologySpec::Empa(spec) => spec.buses[0].t_bus = value,
                TopologySpec::Direct { .. } => {
                    return Err(ExperimentError::Sweep("t_bus sweep needs a bus topology".into()))
                }
            },
            SweepParam::GridPeriod => out.workload.grid_period = Some(value),
        }
        Ok(out)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ExperimentError::Sweep(format!("unknown parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: SweepParam,
    pub points: Vec<SweepPoint>,
}

/// One run per value of `parameter`, on up to `jobs` threads. Results come back
/// in the order of `values`.
pub fn sweep(
    base: &Scenario,
    parameter: SweepParam,
    values: &[u64],
    jobs: usize,
) -> Result<SweepResult, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::Sweep("no values to sweep".into()));
    }
    let increasing = values.windows(2).all(|w| w[0] < w[1]);
    let decreasing = values.windows(2).all(|w| w[0] > w[1]);
    if !(increasing || decreasing) {
        return Err(ExperimentError::Sweep("values must be strictly monotone".into()));
    }
    let scenarios = values
        .iter()
        .map(|&v| parameter.apply(base, v))
        .collect::<Result<Vec<_>, _>>()?;
    let run_all = || {
        scenarios
            .par_iter()
            .zip(values.par_iter())
            .map(|(scenario, &value)| scenario.run().map(|(metrics, _)| SweepPoint { value, metrics }))
            .collect::<Result<Vec<_>, _>>()
    };
    let points = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?
        .install(run_all)?;
    Ok(SweepResult { parameter, points })
}

/// Simulated against modeled speedup over a core-count sweep. Both curves are
/// normalized to the first sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    /// `(n, simulated speedup, modeled speedup)`
    pub points: Vec<(u64, f64, f64)>,
    pub max_rel_divergence: f64,
    pub simulated_plateau: f64,
    pub model_plateau: f64,
}

fn check_core_sweep(sweep: &SweepResult) -> Result<(), ExperimentError> {
    if !matches!(sweep.parameter, SweepParam::Cores | SweepParam::HiddenWidth) {
        return Err(ExperimentError::Sweep(format!(
            "model comparison needs a core-count sweep, not `{}`",
            sweep.parameter
        )));
    }
    if sweep.points.len() < 3 {
        return Err(ExperimentError::Sweep(
            "model comparison needs at least 3 points".into(),
        ));
    }
    Ok(())
}

pub fn compare_with_model(
    sweep: &SweepResult,
    params: &ScalingParams<f64>,
) -> Result<ModelComparison, ExperimentError> {
    check_core_sweep(sweep)?;
    let first = &sweep.points[0];
    let base_time = params.relative_time(first.value as f64)?;
    let mut points = Vec::with_capacity(sweep.points.len());
    let mut max_rel_divergence: f64 = 0.0;
    for p in &sweep.points {
        let simulated = first.metrics.total_time as f64 / p.metrics.total_time as f64;
        let modeled = base_time / params.relative_time(p.value as f64)?;
        max_rel_divergence = max_rel_divergence.max((simulated - modeled).abs() / modeled);
        points.push((p.value, simulated, modeled));
    }
    let simulated_plateau = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let model_plateau = match optimal_cores(params) {
        Ok(n) => base_time / params.relative_time(n as f64)?,
        Err(_) => base_time / params.nonpayload_fraction(),
    };
    Ok(ModelComparison {
        points,
        max_rel_divergence,
        simulated_plateau,
        model_plateau,
    })
}

/// Least-squares fit of `total(n) = A * (s + (1 - s) / n + c * (n - 1))` to a
/// core-count sweep, returning `(s, c)` with unit per-core performance.
pub fn fit_scaling_params(sweep: &SweepResult) -> Result<ScalingParams<f64>, ExperimentError> {
    check_core_sweep(sweep)?;
    // linear in (a, b, d): total = a + b / n + d * (n - 1), with A = a + b
    let mut normal = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for p in &sweep.points {
        let n = p.value as f64;
        let row = [1.0, 1.0 / n, n - 1.0];
        let y = p.metrics.total_time as f64;
        for i in 0..3 {
            for j in 0..3 {
                normal[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * y;
        }
    }
    let [a, b, d] =
        solve3(normal, rhs).ok_or_else(|| ExperimentError::Sweep("sweep points do not determine a fit".into()))?;
    let scale = a + b;
    let s = (a / scale).clamp(0.0, 1.0);
    let c = (d / scale).max(0.0);
    Ok(ScalingParams::new(s, c, 1.0)?)
}

fn solve3(m: [[f64; 3]; 3], v: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let full = det(&m);
    if full.abs() < f64::EPSILON * m.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max).powi(3) {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut replaced = m;
        for row in 0..3 {
            replaced[row][col] = v[row];
        }
        *slot = det(&replaced) / full;
    }
    Some(out)
}
