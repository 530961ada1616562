#![allow(dead_code)]

use neurocomm::engine::{Activity, EventKind, SimTrace};
use neurocomm::experiments::{Metrics, Scenario, TopologySpec, WorkloadSpec};
use neurocomm::topology::{BusLevelSpec, EmpaSpec};
use rand::Rng;

pub fn scenario(topology: TopologySpec, layers: &[u32], t_comp: u64) -> Scenario {
    Scenario {
        topology,
        workload: WorkloadSpec {
            layers: layers.to_vec(),
            t_comp,
            hidden_compute: None,
            total_work: None,
            grid_period: None,
            offload: None,
            placement: None,
            stimuli: None,
            priority_classes: None,
        },
    }
}

pub fn shared_bus(t_bus: u64) -> TopologySpec {
    TopologySpec::SharedBus {
        t_bus,
        broadcast: true,
        nodes: None,
    }
}

pub fn direct(t_link: u64) -> TopologySpec {
    TopologySpec::Direct { t_link, nodes: None }
}

/// `payload + nonpayload + idle = n * total`, per entity and in sum.
pub fn assert_accounting(m: &Metrics) {
    for (id, e) in &m.per_entity {
        assert_eq!(e.payload + e.nonpayload + e.idle, m.total_time, "entity {id}");
    }
    assert_eq!(
        m.payload_time + m.nonpayload_time + m.idle_time,
        u64::from(m.entities) * m.total_time
    );
}

/// Causality, bus mutual exclusion, conservation and per-neuron mutual blocking.
pub fn assert_trace_invariants(trace: &SimTrace) {
    assert!(
        trace.records.windows(2).all(|w| w[0].time <= w[1].time),
        "time went backwards"
    );
    for (bus, intervals) in &trace.occupancy {
        let mut sorted = intervals.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            assert!(w[0].end <= w[1].start, "overlap on {bus}: {:?} {:?}", w[0], w[1]);
        }
    }
    assert_eq!(trace.messages_delivered(), trace.messages.len(), "undelivered messages");
    for (entity, spans) in &trace.activity {
        let compute: Vec<_> = spans.iter().filter(|(a, _)| *a == Activity::Compute).collect();
        let send: Vec<_> = spans.iter().filter(|(a, _)| *a == Activity::Send).collect();
        for (_, c) in &compute {
            for (_, s) in &send {
                assert!(!c.overlaps(s), "n{entity} computes while sending: {c:?} {s:?}");
            }
        }
    }
}

/// Efficiency recomputed from the executed compute events alone.
pub fn efficiency_from_records(trace: &SimTrace, entities: u32) -> f64 {
    let payload: u64 = trace
        .records
        .iter()
        .filter(|r| r.kind == EventKind::ComputeStart)
        .map(|r| r.duration)
        .sum();
    payload as f64 / (f64::from(entities) * trace.final_time.0 as f64)
}

/// A random layered scenario on a random topology.
pub fn random_scenario<R: Rng>(rng: &mut R) -> Scenario {
    let depth = rng.gen_range(2..=5);
    let layers: Vec<u32> = (0..depth)
        .map(|i| {
            if i == 0 {
                rng.gen_range(1..=2)
            } else {
                rng.gen_range(1..=5)
            }
        })
        .collect();
    let t_comp = rng.gen_range(1..=20);
    let topology = match rng.gen_range(0..4) {
        0 => direct(rng.gen_range(1..=5)),
        1 => shared_bus(rng.gen_range(1..=5)),
        2 => TopologySpec::SharedBus {
            t_bus: rng.gen_range(1..=5),
            broadcast: false,
            nodes: None,
        },
        _ => TopologySpec::Empa(EmpaSpec {
            clusters: rng.gen_range(2..=6),
            rows: rng.gen_range(2..=3),
            cols: rng.gen_range(2..=3),
            clusters_per_row: 0,
            t_hop: rng.gen_range(1..=3),
            t_head: rng.gen_range(0..=3),
            t_mem: 0,
            buses: vec![BusLevelSpec {
                t_bus: rng.gen_range(1..=6),
                fanout: None,
            }],
        }),
    };
    let mut s = scenario(topology, &layers, t_comp);
    if let TopologySpec::Empa(spec) = &mut s.topology {
        // make sure the layers fit
        let needed: u32 = layers.iter().sum();
        let per_cluster = spec.rows * spec.cols - 1;
        spec.clusters = spec.clusters.max(needed.div_ceil(per_cluster));
    }
    s
}
