mod common;

use common::*;
use neurocomm::engine::{EventKind, Interval, SimTime};
use neurocomm::experiments::{run_experiment, TopologySpec};
use neurocomm::network::{simulate, SimError};
use neurocomm::topology::{BusLevelSpec, CoreCoord, EmpaSpec, NodeId, Topology};
use neurocomm::workload::{AnalogOffload, NeuronSpec, Stimulus, TimeModel, Workload, WorkloadError};

fn iv(a: u64, b: u64) -> Interval {
    Interval::new(SimTime(a), SimTime(b))
}

fn compute_spans(trace: &neurocomm::SimTrace, node: u32) -> Vec<Interval> {
    trace.activity[&node]
        .iter()
        .filter(|(a, _)| *a == neurocomm::engine::Activity::Compute)
        .map(|&(_, i)| i)
        .collect()
}

// Hand schedule, shared bus, t_bus = 1, t_comp = 5:
//   input broadcast [0,1) -> hidden compute [1,6) -> bus [6,7) and [7,8)
//   -> output has both arguments at 8 -> compute [8,13)
#[test]
fn hidden_layer_on_shared_bus() {
    let (m, trace) = scenario(shared_bus(1), &[1, 2, 1], 5).run().unwrap();
    assert_eq!(m.total_time, 13);
    assert_eq!(trace.occupancy["bus"], vec![iv(0, 1), iv(6, 7), iv(7, 8)]);
    assert_eq!(compute_spans(&trace, 1), vec![iv(1, 6)]);
    assert_eq!(compute_spans(&trace, 2), vec![iv(1, 6)]);
    assert_eq!(compute_spans(&trace, 3), vec![iv(8, 13)]);
    // the output's second argument arrives one bus slot after its first
    let arrivals: Vec<_> = trace
        .messages
        .iter()
        .filter(|msg| msg.dsts == vec![3])
        .map(|msg| msg.delivered.unwrap().0)
        .collect();
    assert_eq!(arrivals, vec![7, 8]);
    assert_eq!(m.payload_time, 15);
    assert_eq!(m.bus_busy_total(), 3);
    assert_accounting(&m);
    assert_trace_invariants(&trace);
}

// Hand schedule, direct wires, t_link = 1: [0,1) -> [1,6) -> [6,7) -> [7,12)
#[test]
fn hidden_layer_on_direct_wires() {
    let (m, trace) = scenario(direct(1), &[1, 2, 1], 5).run().unwrap();
    assert_eq!(m.total_time, 12);
    assert_eq!(compute_spans(&trace, 3), vec![iv(7, 12)]);
    assert_eq!(m.bus_busy_total(), 0);
    assert_accounting(&m);
}

#[test]
fn unicast_input_on_shared_bus() {
    let topology = TopologySpec::SharedBus {
        t_bus: 1,
        broadcast: false,
        nodes: None,
    };
    let (m, trace) = scenario(topology, &[1, 2, 1], 5).run().unwrap();
    // [0,1) to h1, [1,2) to h2; h1 [1,6), h2 [2,7); sends [6,7), [7,8); output [8,13)
    assert_eq!(trace.occupancy["bus"], vec![iv(0, 1), iv(1, 2), iv(6, 7), iv(7, 8)]);
    assert_eq!(m.total_time, 13);
    assert_trace_invariants(&trace);
}

#[test]
fn single_neuron() {
    let w = Workload::new(
        vec![NeuronSpec::new(NodeId(0), 5, 1, vec![])],
        vec![Stimulus {
            neuron: NodeId(0),
            at: 0,
        }],
        TimeModel::EventDriven,
    )
    .unwrap();
    let (m, trace) = run_experiment(&w, &Topology::direct(1, 1).unwrap()).unwrap();
    assert_eq!(m.total_time, 5);
    assert_eq!(m.efficiency, 1.0);
    assert_eq!(compute_spans(&trace, 0), vec![iv(0, 5)]);
}

#[test]
fn two_neuron_chain() {
    let (m, _) = scenario(direct(3), &[1, 1], 5).run().unwrap();
    assert_eq!(m.total_time, 3 + 5);
    let (m, _) = scenario(shared_bus(2), &[1, 1], 5).run().unwrap();
    assert_eq!(m.total_time, 2 + 5);
}

#[test]
fn empty_workload_is_empty_trace() {
    let w = Workload::new(
        vec![NeuronSpec::new(NodeId(0), 5, 1, vec![])],
        vec![],
        TimeModel::EventDriven,
    )
    .unwrap();
    let trace = simulate(&w, &Topology::direct(1, 1).unwrap()).unwrap();
    assert!(trace.records.is_empty());
    assert_eq!(trace.final_time, SimTime(0));
}

#[test]
fn simultaneous_requests_go_by_node_id() {
    // nodes 3 and 7 finish computing at t=2 and both send to node 0
    let neurons = vec![
        NeuronSpec::new(NodeId(7), 2, 1, vec![NodeId(0)]),
        NeuronSpec::new(NodeId(3), 2, 1, vec![NodeId(0)]),
        NeuronSpec::new(NodeId(0), 1, 2, vec![]),
    ];
    let stimuli = vec![
        Stimulus {
            neuron: NodeId(7),
            at: 0,
        },
        Stimulus {
            neuron: NodeId(3),
            at: 0,
        },
    ];
    let w = Workload::new(neurons, stimuli, TimeModel::EventDriven).unwrap();
    let trace = simulate(&w, &Topology::shared_bus(8, 4, true).unwrap()).unwrap();
    assert_eq!(trace.occupancy["bus"], vec![iv(2, 6), iv(6, 10)]);
    let done = |src: u32| {
        trace
            .messages
            .iter()
            .find(|m| m.src == src)
            .unwrap()
            .transported
            .unwrap()
            .0
    };
    assert_eq!(done(3), 6);
    assert_eq!(done(7), 10);
}

#[test]
fn uncontended_bus_message_takes_t_bus() {
    let (_, trace) = scenario(shared_bus(7), &[1, 1], 0).run().unwrap();
    let msg = &trace.messages[0];
    assert_eq!(msg.delivered.unwrap().0 - msg.sent.0, 7);
}

#[test]
fn compute_starts_when_last_argument_arrives() {
    // a relays at 0 and arrives at 3; b computes 6 and arrives at 9
    let neurons = vec![
        NeuronSpec::new(NodeId(0), 0, 1, vec![NodeId(2)]),
        NeuronSpec::new(NodeId(1), 6, 1, vec![NodeId(2)]),
        NeuronSpec::new(NodeId(2), 5, 2, vec![NodeId(3)]),
        NeuronSpec::new(NodeId(3), 0, 1, vec![]),
    ];
    let stimuli = vec![
        Stimulus {
            neuron: NodeId(0),
            at: 0,
        },
        Stimulus {
            neuron: NodeId(1),
            at: 0,
        },
    ];
    let w = Workload::new(neurons, stimuli, TimeModel::EventDriven).unwrap();
    let trace = simulate(&w, &Topology::direct(4, 3).unwrap()).unwrap();
    let end = trace
        .records
        .iter()
        .find(|r| r.kind == EventKind::ComputeEnd && r.subject == 2)
        .unwrap();
    assert_eq!(end.time, SimTime(14));
    let send = trace.messages.iter().find(|m| m.src == 2).unwrap();
    assert_eq!(send.sent, SimTime(14));
    assert_assoc_stimulus_compute(&trace);
}

fn assert_assoc_stimulus_compute(trace: &neurocomm::SimTrace) {
    // fan_in = 1 with a stimulus at t=0 computes [0, t_comp)
    assert_eq!(compute_spans(trace, 1), vec![iv(0, 6)]);
}

#[test]
fn surplus_argument_is_rejected() {
    let neurons = vec![
        NeuronSpec::new(NodeId(0), 1, 1, vec![NodeId(2)]),
        NeuronSpec::new(NodeId(1), 1, 1, vec![NodeId(2)]),
        NeuronSpec::new(NodeId(2), 1, 1, vec![]),
    ];
    let stimuli = vec![
        Stimulus {
            neuron: NodeId(0),
            at: 0,
        },
        Stimulus {
            neuron: NodeId(1),
            at: 0,
        },
    ];
    let w = Workload::new(neurons, stimuli, TimeModel::EventDriven).unwrap();
    let err = simulate(&w, &Topology::direct(3, 1).unwrap()).unwrap_err();
    assert!(matches!(
        err,
        SimError::Workload(WorkloadError::SurplusArgument { neuron: NodeId(2), .. })
    ));
}

#[test]
fn repeated_stimuli_run_separate_waves() {
    let neurons = vec![
        NeuronSpec::new(NodeId(0), 4, 1, vec![NodeId(1)]),
        NeuronSpec::new(NodeId(1), 3, 1, vec![]),
    ];
    // the second stimulus arrives while n0 is still busy
    let stimuli = vec![
        Stimulus {
            neuron: NodeId(0),
            at: 0,
        },
        Stimulus {
            neuron: NodeId(0),
            at: 2,
        },
    ];
    let w = Workload::new(neurons, stimuli, TimeModel::EventDriven).unwrap();
    let trace = simulate(&w, &Topology::shared_bus(2, 2, true).unwrap()).unwrap();
    // n0: compute [0,4), send [4,6), compute [6,10), send [10,12)
    assert_eq!(compute_spans(&trace, 0), vec![iv(0, 4), iv(6, 10)]);
    assert_eq!(compute_spans(&trace, 1), vec![iv(6, 9), iv(12, 15)]);
    assert_trace_invariants(&trace);
}

#[test]
fn time_grid_defers_deliveries() {
    // P = 10: input [0,1) -> 10; hidden [10,15); bus [15,16),[16,17) -> 20; output [20,25)
    let mut s = scenario(shared_bus(1), &[1, 2, 1], 5);
    s.workload.grid_period = Some(10);
    let (m, trace) = s.run().unwrap();
    assert_eq!(m.total_time, 25);
    assert_eq!(compute_spans(&trace, 3), vec![iv(20, 25)]);
    assert!(trace.records.iter().any(|r| r.kind == EventKind::GridBoundary));
    assert_accounting(&m);
}

#[test]
fn unit_grid_is_event_driven() {
    let base = scenario(shared_bus(1), &[1, 3, 2], 5);
    let mut gridded = base.clone();
    gridded.workload.grid_period = Some(1);
    let (_, a) = base.run().unwrap();
    let (_, b) = gridded.run().unwrap();
    assert_eq!(a, b);
}

#[test]
fn analog_offload_slows_the_network() {
    let mut s = scenario(direct(1), &[1, 1], 100);
    let (digital, _) = s.run().unwrap();
    s.workload.offload = Some(AnalogOffload {
        t_analog: 10,
        t_ctx: 10_000,
    });
    let (analog, _) = s.run().unwrap();
    assert_eq!(digital.total_time, 101);
    assert_eq!(analog.total_time, 1 + 20_010);
}

#[test]
fn shared_bus_width_law() {
    let mut last = None;
    for k in 1..=12 {
        let (m, _) = scenario(shared_bus(3), &[1, k, 1], 5).run().unwrap();
        if let Some(prev) = last {
            assert_eq!(m.total_time - prev, 3, "k = {k}");
        }
        last = Some(m.total_time);
    }
}

#[test]
fn direct_width_independence() {
    let totals: Vec<_> = (1..=12)
        .map(|k| scenario(direct(2), &[1, k, 1], 5).run().unwrap().0.total_time)
        .collect();
    assert!(totals.iter().all(|&t| t == 2 + 5 + 2 + 5));
}

fn one_cluster(rows: u32, cols: u32, t_hop: u64) -> Topology {
    Topology::empa(EmpaSpec {
        clusters: 1,
        rows,
        cols,
        clusters_per_row: 1,
        t_hop,
        t_head: 2,
        t_mem: 0,
        buses: vec![BusLevelSpec { t_bus: 5, fanout: None }],
    })
    .unwrap()
}

#[test]
fn remapped_neuron_changes_total_by_hop_delta() {
    let mut topology = one_cluster(5, 5, 1);
    let at = |t: &Topology, r, c| t.node_at(0, r, c).unwrap();
    let slots = [at(&topology, 0, 1), at(&topology, 0, 2), at(&topology, 0, 3)];
    let w = Workload::layered(&[1, 1, 1], 7, &slots).unwrap();
    let (before, _) = run_experiment(&w, &topology).unwrap();
    assert_eq!(before.total_time, 1 + 7 + 1 + 7);

    topology.release_unused(&w.node_ids());
    let target = topology
        .core_index(CoreCoord {
            cluster: 0,
            row: 2,
            col: 2,
        })
        .unwrap();
    topology.remap_core(slots[1], target).unwrap();
    let (after, trace) = run_experiment(&w, &topology).unwrap();
    // the hidden neuron is now 2 hops from both of its partners
    assert_eq!(after.total_time - before.total_time, (2 - 1) + (2 - 1));
    assert_eq!(after.bus_busy_total(), 0);
    assert_trace_invariants(&trace);
}

#[test]
fn remap_to_occupied_core_fails() {
    let mut topology = one_cluster(3, 3, 1);
    let occupied = topology
        .core_index(CoreCoord {
            cluster: 0,
            row: 1,
            col: 1,
        })
        .unwrap();
    assert!(topology.remap_core(NodeId(1), occupied).is_err());
}

#[test]
fn cross_cluster_message_follows_route() {
    let topology = Topology::empa(EmpaSpec {
        clusters: 4,
        rows: 4,
        cols: 4,
        clusters_per_row: 2,
        t_hop: 1,
        t_head: 2,
        t_mem: 0,
        buses: vec![BusLevelSpec { t_bus: 5, fanout: None }],
    })
    .unwrap();
    let a = topology.node_at(0, 3, 2).unwrap();
    let b = topology.node_at(3, 1, 2).unwrap();
    let w = Workload::new(
        vec![NeuronSpec::new(a, 0, 1, vec![b]), NeuronSpec::new(b, 1, 1, vec![])],
        vec![Stimulus { neuron: a, at: 0 }],
        TimeModel::EventDriven,
    )
    .unwrap();
    let (m, trace) = run_experiment(&w, &topology).unwrap();
    assert_eq!(trace.messages[0].delivered, Some(SimTime(3 + 2 + 5 + 2 + 2)));
    assert_eq!(m.bus_busy["bus:L1.0"], 5);
    assert_eq!(trace.occupancy["bus:L1.0"], vec![iv(5, 10)]);
}

#[test]
fn capacity_error_from_scenario() {
    let s = scenario(
        TopologySpec::Empa(EmpaSpec {
            clusters: 1,
            rows: 2,
            cols: 2,
            clusters_per_row: 0,
            t_hop: 1,
            t_head: 1,
            t_mem: 0,
            buses: vec![BusLevelSpec { t_bus: 1, fanout: None }],
        }),
        &[1, 2, 1],
        5,
    );
    assert!(matches!(
        s.run(),
        Err(neurocomm::experiments::ExperimentError::Workload(
            WorkloadError::Capacity {
                needed: 4,
                available: 3
            }
        ))
    ));
}

#[test]
fn traces_are_reproducible() {
    let mut rng = <rand::rngs::StdRng as rand::SeedableRng>::seed_from_u64(11);
    for _ in 0..20 {
        let s = random_scenario(&mut rng);
        let (m1, t1) = s.run().unwrap();
        let (m2, t2) = s.run().unwrap();
        let (mut b1, mut b2) = (Vec::new(), Vec::new());
        t1.write_jsonl(&mut b1).unwrap();
        t2.write_jsonl(&mut b2).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(m1, m2);
    }
}

#[test]
fn efficiency_matches_trace_records() {
    let mut rng = <rand::rngs::StdRng as rand::SeedableRng>::seed_from_u64(5);
    for _ in 0..30 {
        let s = random_scenario(&mut rng);
        let (m, trace) = s.run().unwrap();
        assert_accounting(&m);
        assert_trace_invariants(&trace);
        let recomputed = efficiency_from_records(&trace, m.entities);
        assert!((m.efficiency - recomputed).abs() < 1e-12);
        assert!(m.efficiency > 0.0 && m.efficiency <= 1.0);
        // energy proxy is payload over efficiency
        assert!((m.energy_proxy as f64 - m.payload_time as f64 / m.efficiency).abs() < 1e-6 * m.energy_proxy as f64);
    }
}
