//! Deterministic discrete-event core.
//!
//! Events are executed in `(time, lane, seq)` order. `seq` is assigned in
//! scheduling order, so two events at the same tick run in the order they were
//! scheduled. Bus arbitration ([`EventKind::BusAcquire`]) runs in a late lane
//! after every other event of the same tick, so all requests made during a
//! tick are visible to the arbiter.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

/// Simulated time in integer ticks (1 tick = 1 ns by default).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn ticks(self) -> u64 {
        self.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::ops::Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: u64) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EventKind {
    ComputeStart,
    ComputeEnd,
    MsgSendRequest,
    BusAcquire,
    BusRelease,
    MsgDeliver,
    GridBoundary,
}

impl EventKind {
    fn lane(self) -> u8 {
        match self {
            EventKind::BusAcquire => 1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    /// Entity the event concerns: a neuron, or a resource for bus events.
    pub subject: u32,
    /// Message id, when the event carries one.
    pub payload: Option<u64>,
}

impl Event {
    fn key(&self) -> (SimTime, u8, u64) {
        (self.at, self.kind.lane(), self.seq)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("causality violation: cannot schedule at t={requested} when now is t={now}")]
pub struct CausalityError {
    pub now: SimTime,
    pub requested: SimTime,
}

/// Pending-event queue plus the simulation clock.
#[derive(Debug, Default)]
pub struct Scheduler {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Event>>,
}

impl Scheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(
        &mut self,
        at: SimTime,
        kind: EventKind,
        subject: u32,
        payload: Option<u64>,
    ) -> Result<EventId, CausalityError> {
        if at < self.now {
            return Err(CausalityError {
                now: self.now,
                requested: at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Event {
            at,
            seq,
            kind,
            subject,
            payload,
        }));
        Ok(EventId(seq))
    }

    fn pop_until(&mut self, until: Option<SimTime>) -> Option<Event> {
        let Reverse(head) = self.queue.peek()?;
        if until.is_some_and(|limit| head.at > limit) {
            return None;
        }
        let Reverse(event) = self.queue.pop()?;
        debug_assert!(event.at >= self.now);
        self.now = event.at;
        Some(event)
    }
}

/// One executed event as exported to trace files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub time: SimTime,
    pub kind: EventKind,
    pub subject: u32,
    pub object: Option<String>,
    pub duration: u64,
}

/// Half-open tick interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Interval {
    pub start: SimTime,
    pub end: SimTime,
}

impl Interval {
    pub fn new(start: SimTime, end: SimTime) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end.0 - self.start.0
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// What an entity is doing during an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Activity {
    /// Payload work.
    Compute,
    /// Blocked transmitting, including time queued for a bus.
    Send,
    /// Waiting for a delivery held back to a time-grid boundary.
    Deferral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageRecord {
    pub id: u64,
    pub src: u32,
    pub dsts: Vec<u32>,
    pub sent: SimTime,
    /// Time the last segment of the path completed.
    pub transported: Option<SimTime>,
    pub delivered: Option<SimTime>,
}

/// Time-ordered record of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
    /// Occupancy intervals per bus, in grant order.
    pub occupancy: BTreeMap<String, Vec<Interval>>,
    /// Busy intervals per entity.
    pub activity: BTreeMap<u32, Vec<(Activity, Interval)>>,
    pub messages: Vec<MessageRecord>,
    pub final_time: SimTime,
}

impl SimTrace {
    /// Writes one JSON object per executed event.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn bus_busy(&self) -> BTreeMap<String, u64> {
        self.occupancy
            .iter()
            .map(|(bus, intervals)| (bus.clone(), intervals.iter().map(Interval::len).sum()))
            .collect()
    }

    pub fn messages_delivered(&self) -> usize {
        self.messages.iter().filter(|m| m.delivered.is_some()).count()
    }
}

/// Handle given to event handlers for scheduling and trace bookkeeping.
pub struct Context<'a> {
    scheduler: &'a mut Scheduler,
    trace: &'a mut SimTrace,
}

impl Context<'_> {
    pub fn now(&self) -> SimTime {
        self.scheduler.now
    }

    pub fn schedule(
        &mut self,
        at: SimTime,
        kind: EventKind,
        subject: u32,
        payload: Option<u64>,
    ) -> Result<EventId, CausalityError> {
        self.scheduler.schedule(at, kind, subject, payload)
    }

    /// Attaches an object label and a duration to the record of the event being handled.
    pub fn annotate(&mut self, object: impl Into<String>, duration: u64) {
        if let Some(record) = self.trace.records.last_mut() {
            record.object = Some(object.into());
            record.duration = duration;
        }
    }

    /// Re-attributes the record of the event being handled, e.g. to the
    /// winner of an arbitration keyed on a resource.
    pub fn attribute(&mut self, subject: u32) {
        if let Some(record) = self.trace.records.last_mut() {
            record.subject = subject;
        }
    }

    pub fn occupy(&mut self, bus: &str, interval: Interval) {
        self.trace.occupancy.entry(bus.to_owned()).or_default().push(interval);
    }

    pub fn record_activity(&mut self, entity: u32, activity: Activity, interval: Interval) {
        if !interval.is_empty() {
            self.trace
                .activity
                .entry(entity)
                .or_default()
                .push((activity, interval));
        }
    }

    pub fn trace_mut(&mut self) -> &mut SimTrace {
        self.trace
    }
}

pub trait Handler {
    type Error: From<CausalityError>;

    fn handle(&mut self, event: &Event, ctx: &mut Context<'_>) -> Result<(), Self::Error>;
}

/// A single-threaded simulation run driving one [`Handler`].
pub struct Simulation<H> {
    scheduler: Scheduler,
    trace: SimTrace,
    handler: H,
}

impl<H: Handler> Simulation<H> {
    pub fn new(handler: H) -> Self {
        Self {
            scheduler: Scheduler::new(),
            trace: SimTrace::default(),
            handler,
        }
    }

    pub fn now(&self) -> SimTime {
        self.scheduler.now()
    }

    pub fn schedule(
        &mut self,
        at: SimTime,
        kind: EventKind,
        subject: u32,
        payload: Option<u64>,
    ) -> Result<EventId, CausalityError> {
        self.scheduler.schedule(at, kind, subject, payload)
    }

    pub fn handler(&self) -> &H {
        &self.handler
    }

    pub fn handler_mut(&mut self) -> &mut H {
        &mut self.handler
    }

    pub fn trace(&self) -> &SimTrace {
        &self.trace
    }

    pub fn pending(&self) -> usize {
        self.scheduler.pending()
    }

    /// Executes events up to and including `until`, or until the queue drains.
    pub fn run(&mut self, until: Option<SimTime>) -> Result<(), H::Error> {
        while let Some(event) = self.scheduler.pop_until(until) {
            self.trace.records.push(TraceRecord {
                time: event.at,
                kind: event.kind,
                subject: event.subject,
                object: None,
                duration: 0,
            });
            self.trace.final_time = event.at;
            let mut ctx = Context {
                scheduler: &mut self.scheduler,
                trace: &mut self.trace,
            };
            self.handler.handle(&event, &mut ctx)?;
        }
        Ok(())
    }

    pub fn into_parts(self) -> (SimTrace, H) {
        (self.trace, self.handler)
    }
}
