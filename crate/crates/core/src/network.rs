//! Neuron behaviour on top of the event engine: argument buffering, compute
//! phases, message transport over a [`Topology`] and time-grid deferral.
//!
//! A neuron activates once it holds `fan_in` arguments of one wave (a wave is
//! the set of stimuli injected at the same tick, plus everything they cause).
//! It then computes, and at the end of the compute phase sends to all targets.
//! Sending blocks the neuron until every outgoing message has finished
//! transport; a neuron never computes and transmits at the same time.
//!
//! Contended resources (wires, buses) are granted FIFO by request time, then by
//! sender id, then by message id.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::engine::{
    Activity, CausalityError, Context, Event, EventKind, Handler, Interval, MessageRecord, SimTime, SimTrace,
    Simulation,
};
use crate::topology::{NodeId, Path, Resource, Topology, TopologyError};
use crate::workload::{Workload, WorkloadError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error(transparent)]
    Causality(#[from] CausalityError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

#[derive(Debug, Default)]
struct NeuronState {
    args: BTreeMap<u64, u32>,
    ready: VecDeque<u64>,
    computing: bool,
    outstanding: u32,
    send_started: SimTime,
}

#[derive(Debug)]
struct Message {
    src: usize,
    dsts: Vec<usize>,
    wave: u64,
    path: Path,
    cursor: usize,
}

#[derive(Debug, Default)]
struct ResourceState {
    busy: bool,
    arbitration_pending: bool,
    waiting: BTreeSet<(SimTime, NodeId, u64)>,
}

/// Event handler simulating one workload on one topology.
pub struct NetworkModel<'a> {
    workload: &'a Workload,
    topology: &'a Topology,
    index: HashMap<NodeId, usize>,
    neurons: Vec<NeuronState>,
    messages: Vec<Message>,
    resources: Vec<Resource>,
    resource_index: BTreeMap<Resource, u32>,
    resource_state: Vec<ResourceState>,
    /// Waves of not-yet-injected stimuli in injection order.
    stimulus_waves: VecDeque<u64>,
}

impl<'a> NetworkModel<'a> {
    pub fn new(workload: &'a Workload, topology: &'a Topology) -> Result<Self, SimError> {
        let mut index = HashMap::with_capacity(workload.neurons().len());
        let mut cores = BTreeSet::new();
        for (i, neuron) in workload.neurons().iter().enumerate() {
            let core = topology.physical(neuron.id)?;
            if !cores.insert(core) {
                return Err(WorkloadError::Definition(format!("two neurons share core {core}")).into());
            }
            index.insert(neuron.id, i);
        }
        Ok(Self {
            workload,
            topology,
            index,
            neurons: workload.neurons().iter().map(|_| NeuronState::default()).collect(),
            messages: Vec::new(),
            resources: Vec::new(),
            resource_index: BTreeMap::new(),
            resource_state: Vec::new(),
            stimulus_waves: VecDeque::new(),
        })
    }

    fn node(&self, i: usize) -> NodeId {
        self.workload.neurons()[i].id
    }

    /// Schedules the stimuli onto `sim`. Stimuli injected at the same tick form one wave.
    pub fn seed(sim: &mut Simulation<Self>) -> Result<(), SimError> {
        let stimuli = sim.handler().workload.stimuli().to_vec();
        let times: BTreeSet<u64> = stimuli.iter().map(|s| s.at).collect();
        let wave_of = |at: u64| times.range(..at).count() as u64;
        let mut order: Vec<_> = stimuli.iter().enumerate().collect();
        order.sort_by_key(|(i, s)| (s.at, *i));
        let waves: VecDeque<u64> = order.iter().map(|(_, s)| wave_of(s.at)).collect();
        for (_, s) in &order {
            sim.schedule(SimTime(s.at), EventKind::MsgDeliver, s.neuron.0, None)?;
        }
        sim.handler_mut().stimulus_waves = waves;
        Ok(())
    }

    fn resource_id(&mut self, resource: Resource) -> u32 {
        if let Some(&id) = self.resource_index.get(&resource) {
            return id;
        }
        let id = self.resources.len() as u32;
        self.resources.push(resource);
        self.resource_state.push(ResourceState::default());
        self.resource_index.insert(resource, id);
        id
    }

    /// Adds one argument of `wave` to neuron `i`.
    fn neuron_on_message(&mut self, i: usize, wave: u64, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let fan_in = self.workload.neurons()[i].fan_in;
        let state = &mut self.neurons[i];
        let count = state.args.entry(wave).or_insert(0);
        *count += 1;
        if *count > fan_in {
            return Err(WorkloadError::SurplusArgument {
                neuron: self.workload.neurons()[i].id,
                fan_in,
                wave,
            }
            .into());
        }
        // the count stays so a late extra argument of a completed wave is caught
        if *count == fan_in {
            state.ready.push_back(wave);
            self.try_start(i, ctx)?;
        }
        Ok(())
    }

    fn try_start(&mut self, i: usize, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let state = &mut self.neurons[i];
        if state.computing || state.outstanding > 0 {
            return Ok(());
        }
        let Some(wave) = state.ready.pop_front() else {
            return Ok(());
        };
        state.computing = true;
        let now = ctx.now();
        let spec = &self.workload.neurons()[i];
        let duration = spec.effective_compute_time();
        ctx.schedule(now, EventKind::ComputeStart, spec.id.0, Some(wave))?;
        ctx.schedule(now + duration, EventKind::ComputeEnd, spec.id.0, Some(wave))?;
        ctx.record_activity(spec.id.0, Activity::Compute, Interval::new(now, now + duration));
        Ok(())
    }

    fn compute_end(&mut self, i: usize, wave: u64, ctx: &mut Context<'_>) -> Result<(), SimError> {
        self.neurons[i].computing = false;
        let spec = &self.workload.neurons()[i];
        let src = spec.id;
        let targets: Vec<usize> = spec.targets.iter().map(|t| self.index[t]).collect();
        if targets.is_empty() {
            return self.try_start(i, ctx);
        }
        let groups: Vec<Vec<usize>> = if self.topology.broadcasts() {
            vec![targets]
        } else {
            targets.into_iter().map(|t| vec![t]).collect()
        };
        let now = ctx.now();
        self.neurons[i].send_started = now;
        for dsts in groups {
            let path = self.topology.route(src, self.node(dsts[0]))?;
            let id = self.messages.len() as u64;
            ctx.trace_mut().messages.push(MessageRecord {
                id,
                src: src.0,
                dsts: dsts.iter().map(|&d| self.node(d).0).collect(),
                sent: now,
                transported: None,
                delivered: None,
            });
            self.messages.push(Message {
                src: i,
                dsts,
                wave,
                path,
                cursor: 0,
            });
            self.neurons[i].outstanding += 1;
            ctx.schedule(now, EventKind::MsgSendRequest, src.0, Some(id))?;
        }
        Ok(())
    }

    /// Moves message `m` along its path from its cursor, starting at the current tick.
    fn advance(&mut self, m: u64, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let now = ctx.now();
        let msg = &self.messages[m as usize];
        let src = self.node(msg.src);
        let mut elapsed = 0;
        let mut cursor = msg.cursor;
        while let Some(segment) = msg.path.segments.get(cursor) {
            if let Some(resource) = segment.medium.resource() {
                if elapsed > 0 {
                    self.messages[m as usize].cursor = cursor;
                    ctx.schedule(now + elapsed, EventKind::MsgSendRequest, src.0, Some(m))?;
                    return Ok(());
                }
                self.messages[m as usize].cursor = cursor;
                let rid = self.resource_id(resource);
                let state = &mut self.resource_state[rid as usize];
                state.waiting.insert((now, src, m));
                if !state.busy && !state.arbitration_pending {
                    state.arbitration_pending = true;
                    ctx.schedule(now, EventKind::BusAcquire, rid, None)?;
                }
                return Ok(());
            }
            elapsed += segment.latency;
            cursor += 1;
        }
        self.messages[m as usize].cursor = cursor;
        ctx.schedule(now + elapsed, EventKind::MsgDeliver, src.0, Some(m))?;
        Ok(())
    }

    fn acquire(&mut self, rid: u32, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let resource = self.resources[rid as usize];
        let state = &mut self.resource_state[rid as usize];
        state.arbitration_pending = false;
        if state.busy {
            return Ok(());
        }
        let Some((_, src, m)) = state.waiting.pop_first() else {
            return Ok(());
        };
        state.busy = true;
        let now = ctx.now();
        let hold = self.topology.occupancy(resource);
        let name = resource.to_string();
        if resource.is_bus() {
            ctx.occupy(&name, Interval::new(now, now + hold));
        }
        ctx.attribute(src.0);
        ctx.annotate(format!("{name} msg{m}"), hold);
        ctx.schedule(now + hold, EventKind::BusRelease, src.0, Some(m))?;
        Ok(())
    }

    fn release(&mut self, m: u64, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let msg = &mut self.messages[m as usize];
        let resource = msg.path.segments[msg.cursor]
            .medium
            .resource()
            .expect("message released a resource segment");
        msg.cursor += 1;
        let rid = self.resource_index[&resource];
        ctx.annotate(resource.to_string(), 0);
        self.resource_state[rid as usize].busy = false;
        self.advance(m, ctx)?;
        let state = &mut self.resource_state[rid as usize];
        if !state.waiting.is_empty() && !state.busy && !state.arbitration_pending {
            state.arbitration_pending = true;
            ctx.schedule(ctx.now(), EventKind::BusAcquire, rid, None)?;
        }
        Ok(())
    }

    fn transported(&mut self, m: u64, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let now = ctx.now();
        ctx.trace_mut().messages[m as usize].transported = Some(now);
        let src = self.messages[m as usize].src;
        let sender = &mut self.neurons[src];
        sender.outstanding -= 1;
        if sender.outstanding == 0 {
            let started = sender.send_started;
            ctx.record_activity(self.node(src).0, Activity::Send, Interval::new(started, now));
            self.try_start(src, ctx)?;
        }
        let at = self.workload.time_model().delivery_time(now.0);
        if at > now.0 {
            let subject = self.node(self.messages[m as usize].dsts[0]).0;
            ctx.schedule(SimTime(at), EventKind::GridBoundary, subject, Some(m))?;
            Ok(())
        } else {
            self.deliver(m, ctx)
        }
    }

    fn deliver(&mut self, m: u64, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let now = ctx.now();
        let record = &mut ctx.trace_mut().messages[m as usize];
        record.delivered = Some(now);
        let transported = record.transported.expect("delivery after transport");
        let (dsts, wave) = {
            let msg = &self.messages[m as usize];
            (msg.dsts.clone(), msg.wave)
        };
        for d in dsts {
            ctx.record_activity(self.node(d).0, Activity::Deferral, Interval::new(transported, now));
            self.neuron_on_message(d, wave, ctx)?;
        }
        Ok(())
    }
}

impl Handler for NetworkModel<'_> {
    type Error = SimError;

    fn handle(&mut self, event: &Event, ctx: &mut Context<'_>) -> Result<(), SimError> {
        let neuron = |this: &Self| this.index[&NodeId(event.subject)];
        match (event.kind, event.payload) {
            (EventKind::MsgDeliver, None) => {
                let wave = self.stimulus_waves.pop_front().expect("stimulus wave recorded");
                ctx.annotate(format!("stimulus wave{wave}"), 0);
                self.neuron_on_message(neuron(self), wave, ctx)
            }
            (EventKind::ComputeStart, Some(wave)) => {
                let duration = self.workload.neurons()[neuron(self)].effective_compute_time();
                ctx.annotate(format!("wave{wave}"), duration);
                Ok(())
            }
            (EventKind::ComputeEnd, Some(wave)) => self.compute_end(neuron(self), wave, ctx),
            (EventKind::MsgSendRequest, Some(m)) => {
                ctx.annotate(format!("msg{m}"), 0);
                self.advance(m, ctx)
            }
            (EventKind::BusAcquire, _) => self.acquire(event.subject, ctx),
            (EventKind::BusRelease, Some(m)) => self.release(m, ctx),
            (EventKind::MsgDeliver, Some(m)) => {
                let label = self.messages[m as usize]
                    .dsts
                    .iter()
                    .map(|&d| self.node(d).to_string())
                    .collect::<Vec<_>>()
                    .join("+");
                ctx.annotate(format!("msg{m} to {label}"), 0);
                self.transported(m, ctx)
            }
            (EventKind::GridBoundary, Some(m)) => {
                ctx.annotate(format!("msg{m}"), 0);
                self.deliver(m, ctx)
            }
            (kind, payload) => unreachable!("malformed event {kind:?} with payload {payload:?}"),
        }
    }
}

/// Runs `workload` on `topology` to exhaustion.
pub fn simulate(workload: &Workload, topology: &Topology) -> Result<SimTrace, SimError> {
    let model = NetworkModel::new(workload, topology)?;
    let mut sim = Simulation::new(model);
    NetworkModel::seed(&mut sim)?;
    sim.run(None)?;
    let (trace, _) = sim.into_parts();
    Ok(trace)
}
