//! Simulation and analytic modeling of neuromorphic communication.
//!
//! * [`scaling`]: closed-form speedup, efficiency, payload-performance and
//!   mixed-precision models, generic over the scalar type.
//! * [`engine`]: the deterministic discrete-event core.
//! * [`topology`]: direct wiring, shared bus and clustered interconnects.
//! * [`workload`] and [`network`]: neurons, layered workloads and their
//!   behaviour during a run.
//! * [`experiments`]: metrics, sweeps and model comparison.
//! * [`dataset`]: tabular and line-delimited exports.

pub mod dataset;
pub mod engine;
pub mod experiments;
pub mod network;
pub mod scalar;
pub mod scaling;
pub mod topology;
pub mod workload;

pub use engine::{SimTime, SimTrace};
pub use experiments::{run_experiment, sweep, Metrics, Scenario, SweepParam, SweepResult};
pub use network::{simulate, SimError};
pub use scalar::Scalar;
pub use topology::{NodeId, Topology};
pub use workload::{TimeModel, Workload};

pub type ScalingParams = scaling::ScalingParams<f64>;
pub type ScalingParams32 = scaling::ScalingParams<f32>;
pub type WorkloadProfile = scaling::WorkloadProfile<f64>;
pub type WorkloadProfile32 = scaling::WorkloadProfile<f32>;
pub type CurvePoint = scaling::CurvePoint<f64>;
pub type Extrapolation = scaling::Extrapolation<f64>;
