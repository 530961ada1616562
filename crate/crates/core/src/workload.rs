//! Neuron specifications and workload builders.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeId;

/// Default context-switch cost in instruction-time ticks, paid once on
/// entering and once on leaving an analog co-processor.
pub const DEFAULT_CONTEXT_SWITCH: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Definition(String),
    #[error("workload needs {needed} cores but the topology offers {available}")]
    Capacity { needed: usize, available: usize },
    #[error("neuron {neuron} received more than {fan_in} arguments in wave {wave}")]
    SurplusArgument { neuron: NodeId, fan_in: u32, wave: u64 },
}

fn definition(msg: impl Into<String>) -> WorkloadError {
    WorkloadError::Definition(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalogOffload {
    pub t_analog: u64,
    #[serde(default = "default_ctx")]
    pub t_ctx: u64,
}

fn default_ctx() -> u64 {
    DEFAULT_CONTEXT_SWITCH
}

impl AnalogOffload {
    pub fn new(t_analog: u64) -> Self {
        Self {
            t_analog,
            t_ctx: DEFAULT_CONTEXT_SWITCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronSpec {
    pub id: NodeId,
    pub compute_time: u64,
    /// Arguments (messages or stimuli) needed per activation.
    pub fan_in: u32,
    pub targets: Vec<NodeId>,
    pub offload: Option<AnalogOffload>,
}

impl NeuronSpec {
    pub fn new(id: NodeId, compute_time: u64, fan_in: u32, targets: Vec<NodeId>) -> Self {
        Self {
            id,
            compute_time,
            fan_in,
            targets,
            offload: None,
        }
    }

    /// Digital compute time, or the analog time plus a context switch in and out.
    pub fn effective_compute_time(&self) -> u64 {
        match self.offload {
            None => self.compute_time,
            Some(AnalogOffload { t_analog, t_ctx }) => t_analog + 2 * t_ctx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stimulus {
    pub neuron: NodeId,
    pub at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeModel {
    #[default]
    EventDriven,
    /// Deliveries wait for the next multiple of `period`.
    TimeGrid { period: u64 },
}

impl TimeModel {
    /// Delivery time of a message whose transport completed at `t`.
    pub fn delivery_time(&self, t: u64) -> u64 {
        match *self {
            TimeModel::EventDriven => t,
            TimeModel::TimeGrid { period } => t.div_ceil(period) * period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    neurons: Vec<NeuronSpec>,
    stimuli: Vec<Stimulus>,
    time_model: TimeModel,
}

impl Workload {
    pub fn new(neurons: Vec<NeuronSpec>, stimuli: Vec<Stimulus>, time_model: TimeModel) -> Result<Self, WorkloadError> {
        let ids: BTreeSet<NodeId> = neurons.iter().map(|n| n.id).collect();
        if ids.len() != neurons.len() {
            return Err(definition("duplicate neuron id"));
        }
        for neuron in &neurons {
            if let Some(missing) = neuron.targets.iter().find(|t| !ids.contains(t)) {
                return Err(definition(format!("{} targets unknown neuron {missing}", neuron.id)));
            }
        }
        if let Some(s) = stimuli.iter().find(|s| !ids.contains(&s.neuron)) {
            return Err(definition(format!("stimulus targets unknown neuron {}", s.neuron)));
        }
        if let TimeModel::TimeGrid { period: 0 } = time_model {
            return Err(definition("time grid period must be at least 1 tick"));
        }
        Ok(Self {
            neurons,
            stimuli,
            time_model,
        })
    }

    /// Fully connected feed-forward layers placed onto `slots` in order. The
    /// input layer relays its stimulus without computing; every other neuron
    /// computes for `t_comp`. One stimulus per input neuron at t = 0.
    pub fn layered(layer_sizes: &[u32], t_comp: u64, slots: &[NodeId]) -> Result<Self, WorkloadError> {
        if layer_sizes.len() < 2 {
            return Err(definition("a layered workload needs at least two layers"));
        }
        if layer_sizes.contains(&0) {
            return Err(definition("layer sizes must be at least 1"));
        }
        let needed: usize = layer_sizes.iter().map(|&n| n as usize).sum();
        if needed > slots.len() {
            return Err(WorkloadError::Capacity {
                needed,
                available: slots.len(),
            });
        }
        let mut layers = Vec::with_capacity(layer_sizes.len());
        let mut next = 0;
        for &size in layer_sizes {
            layers.push(&slots[next..next + size as usize]);
            next += size as usize;
        }
        let mut neurons = Vec::with_capacity(needed);
        for (depth, layer) in layers.iter().enumerate() {
            let targets = layers.get(depth + 1).map(|l| l.to_vec()).unwrap_or_default();
            let (fan_in, compute) = match depth {
                0 => (1, 0),
                _ => (layers[depth - 1].len() as u32, t_comp),
            };
            for &id in layer.iter() {
                neurons.push(NeuronSpec::new(id, compute, fan_in, targets.clone()));
            }
        }
        let stimuli = layers[0].iter().map(|&neuron| Stimulus { neuron, at: 0 }).collect();
        Self::new(neurons, stimuli, TimeModel::EventDriven)
    }

    /// Same workload with deliveries quantized to multiples of `period`.
    pub fn with_time_grid(self, period: u64) -> Result<Self, WorkloadError> {
        self.with_time_model(TimeModel::TimeGrid { period })
    }

    pub fn with_time_model(self, time_model: TimeModel) -> Result<Self, WorkloadError> {
        Self::new(self.neurons, self.stimuli, time_model)
    }

    /// Applies `offload` to every neuron that computes.
    pub fn with_offload(mut self, offload: AnalogOffload) -> Self {
        for neuron in self.neurons.iter_mut().filter(|n| n.compute_time > 0) {
            neuron.offload = Some(offload);
        }
        self
    }

    pub fn neurons(&self) -> &[NeuronSpec] {
        &self.neurons
    }

    pub fn neurons_mut(&mut self) -> &mut [NeuronSpec] {
        &mut self.neurons
    }

    pub fn stimuli(&self) -> &[Stimulus] {
        &self.stimuli
    }

    pub fn time_model(&self) -> TimeModel {
        self.time_model
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.neurons.iter().map(|n| n.id).collect()
    }

    /// Every `(src, dst)` pair the workload sends over.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.neurons
            .iter()
            .flat_map(|n| n.targets.iter().map(move |&t| (n.id, t)))
    }
}
