//! Interconnect models: dedicated wires, a single shared bus, and the
//! clustered design with neighbour wiring, cluster heads and hierarchical buses.
//!
//! Neurons are addressed by virtual [`NodeId`]s which resolve to physical cores
//! through a remappable core map. For the clustered design, physical cores are
//! numbered cluster-major, row-major within a cluster; cell `(0, 0)` of every
//! cluster is its head.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    Usage(String),
    #[error("node {0} is not mapped to a physical core")]
    Unmapped(NodeId),
    #[error("physical core {0} does not exist")]
    NoSuchCore(u32),
    #[error("physical core {core} is occupied by {by}")]
    Occupied { core: u32, by: NodeId },
    #[error("remapping cluster head {0} is not supported")]
    HeadRemap(NodeId),
}

/// Position of a core in the clustered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoreCoord {
    pub cluster: u32,
    pub row: u32,
    pub col: u32,
}

/// One level of the bus hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusLevelSpec {
    /// Ticks a message occupies a bus of this level.
    pub t_bus: u64,
    /// Number of units of the level below (clusters for level 1) joined by one
    /// bus. `None` joins everything; the top level always does.
    #[serde(default)]
    pub fanout: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpaSpec {
    pub clusters: u32,
    pub rows: u32,
    pub cols: u32,
    /// Clusters per row of the cluster layout; 0 picks a near-square layout.
    #[serde(default)]
    pub clusters_per_row: u32,
    pub t_hop: u64,
    /// Gateway latency at a cluster head, paid on leaving and on entering a cluster.
    pub t_head: u64,
    /// Latency of the head's memory port.
    #[serde(default)]
    pub t_mem: u64,
    /// Level 1 first. Cores on different level-1 buses are on different chips.
    pub buses: Vec<BusLevelSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Direct,
    SharedBus,
    Empa,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Fabric {
    Direct { t_link: u64 },
    SharedBus { t_bus: u64, broadcast: bool },
    Empa(EmpaLayout),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct EmpaLayout {
    spec: EmpaSpec,
    clusters_per_row: u32,
    /// Clusters covered by one bus at each level.
    group_sizes: Vec<u32>,
}

/// A contended transport resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Resource {
    Wire { from: u32, to: u32 },
    Bus { level: u8, index: u32 },
}

impl Resource {
    pub fn is_bus(&self) -> bool {
        matches!(self, Resource::Bus { .. })
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resource::Wire { from, to } => write!(f, "wire:{from}->{to}"),
            Resource::Bus { level: 0, .. } => write!(f, "bus"),
            Resource::Bus { level, index } => write!(f, "bus:L{level}.{index}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Medium {
    Wire {
        from: u32,
        to: u32,
    },
    Iccb {
        hops: u32,
    },
    /// `level` 0 is the flat shared bus.
    Bus {
        level: u8,
        index: u32,
    },
    Head {
        cluster: u32,
    },
}

impl Medium {
    /// The resource a message must hold while crossing this segment, if any.
    pub fn resource(&self) -> Option<Resource> {
        match *self {
            Medium::Wire { from, to } => Some(Resource::Wire { from, to }),
            Medium::Bus { level, index } => Some(Resource::Bus { level, index }),
            Medium::Iccb { .. } | Medium::Head { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub medium: Medium,
    pub latency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Path {
    pub segments: Vec<Segment>,
}

impl Path {
    /// Contention-free latency.
    pub fn latency(&self) -> u64 {
        self.segments.iter().map(|s| s.latency).sum()
    }

    pub fn bus_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| matches!(s.medium, Medium::Bus { .. }))
    }

    fn push(&mut self, medium: Medium, latency: u64) {
        self.segments.push(Segment { medium, latency });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CoreMap {
    to_physical: Vec<Option<u32>>,
    to_virtual: Vec<Option<NodeId>>,
}

impl CoreMap {
    fn identity(cores: u32) -> Self {
        Self {
            to_physical: (0..cores).map(Some).collect(),
            to_virtual: (0..cores).map(|i| Some(NodeId(i))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    fabric: Fabric,
    cores: u32,
    map: CoreMap,
}

fn usage(msg: impl Into<String>) -> TopologyError {
    TopologyError::Usage(msg.into())
}

impl Topology {
    /// Every pair of cores has a dedicated wire with latency `t_link`.
    pub fn direct(n_nodes: u32, t_link: u64) -> Result<Self, TopologyError> {
        if n_nodes == 0 {
            return Err(usage("direct topology needs at least one node"));
        }
        if t_link == 0 {
            return Err(usage("t_link must be at least 1 tick"));
        }
        Ok(Self::with_fabric(Fabric::Direct { t_link }, n_nodes))
    }

    /// One bus shared by all cores; each message holds it for `t_bus`. With
    /// `broadcast`, a message to several targets holds it once.
    pub fn shared_bus(n_nodes: u32, t_bus: u64, broadcast: bool) -> Result<Self, TopologyError> {
        if n_nodes == 0 {
            return Err(usage("shared bus topology needs at least one node"));
        }
        if t_bus == 0 {
            return Err(usage("t_bus must be at least 1 tick"));
        }
        Ok(Self::with_fabric(Fabric::SharedBus { t_bus, broadcast }, n_nodes))
    }

    pub fn empa(spec: EmpaSpec) -> Result<Self, TopologyError> {
        if spec.clusters == 0 {
            return Err(usage("at least one cluster is required"));
        }
        let cells = spec
            .rows
            .checked_mul(spec.cols)
            .ok_or_else(|| usage("cluster too large"))?;
        if cells < 2 {
            return Err(usage("a cluster needs room for a head and at least one member"));
        }
        if spec.t_hop == 0 {
            return Err(usage("t_hop must be at least 1 tick"));
        }
        if spec.buses.is_empty() {
            return Err(usage("at least one bus level is required"));
        }
        if spec.buses.iter().any(|b| b.t_bus == 0) {
            return Err(usage("bus t_bus must be at least 1 tick"));
        }
        let cores = spec
            .clusters
            .checked_mul(cells)
            .ok_or_else(|| usage("too many cores"))?;
        let mut group_sizes = Vec::with_capacity(spec.buses.len());
        let mut span = 1u32;
        let last = spec.buses.len() - 1;
        for (level, bus) in spec.buses.iter().enumerate() {
            span = match (level == last, bus.fanout) {
                (false, Some(0)) => return Err(usage("bus fanout must be positive")),
                (false, Some(f)) => span.saturating_mul(f).min(spec.clusters),
                _ => spec.clusters,
            };
            group_sizes.push(span);
        }
        let clusters_per_row = match spec.clusters_per_row {
            0 => (f64::from(spec.clusters).sqrt().ceil() as u32).max(1),
            n => n,
        };
        let layout = EmpaLayout {
            spec,
            clusters_per_row,
            group_sizes,
        };
        Ok(Self::with_fabric(Fabric::Empa(layout), cores))
    }

    fn with_fabric(fabric: Fabric, cores: u32) -> Self {
        Self {
            fabric,
            cores,
            map: CoreMap::identity(cores),
        }
    }

    pub fn kind(&self) -> TopologyKind {
        match self.fabric {
            Fabric::Direct { .. } => TopologyKind::Direct,
            Fabric::SharedBus { .. } => TopologyKind::SharedBus,
            Fabric::Empa(_) => TopologyKind::Empa,
        }
    }

    /// Number of physical cores.
    pub fn cores(&self) -> u32 {
        self.cores
    }

    /// Whether one bus occupancy may carry a message to several targets.
    pub fn broadcasts(&self) -> bool {
        matches!(self.fabric, Fabric::SharedBus { broadcast: true, .. })
    }

    pub fn empa_spec(&self) -> Option<&EmpaSpec> {
        match &self.fabric {
            Fabric::Empa(layout) => Some(&layout.spec),
            _ => None,
        }
    }

    /// Contention-free occupancy time of a resource.
    pub fn occupancy(&self, resource: Resource) -> u64 {
        match (&self.fabric, resource) {
            (Fabric::Direct { t_link }, Resource::Wire { .. }) => *t_link,
            (Fabric::SharedBus { t_bus, .. }, Resource::Bus { .. }) => *t_bus,
            (Fabric::Empa(layout), Resource::Bus { level, .. }) => layout.spec.buses[usize::from(level) - 1].t_bus,
            _ => 0,
        }
    }

    pub fn coord(&self, physical: u32) -> Option<CoreCoord> {
        let Fabric::Empa(layout) = &self.fabric else {
            return None;
        };
        if physical >= self.cores {
            return None;
        }
        let cells = layout.spec.rows * layout.spec.cols;
        let local = physical % cells;
        Some(CoreCoord {
            cluster: physical / cells,
            row: local / layout.spec.cols,
            col: local % layout.spec.cols,
        })
    }

    pub fn core_index(&self, coord: CoreCoord) -> Option<u32> {
        let spec = self.empa_spec()?;
        if coord.cluster >= spec.clusters || coord.row >= spec.rows || coord.col >= spec.cols {
            return None;
        }
        Some(coord.cluster * spec.rows * spec.cols + coord.row * spec.cols + coord.col)
    }

    /// The virtual id whose identity mapping is the core at `coord`.
    pub fn node_at(&self, cluster: u32, row: u32, col: u32) -> Option<NodeId> {
        self.core_index(CoreCoord { cluster, row, col }).map(NodeId)
    }

    pub fn is_head(&self, physical: u32) -> bool {
        self.coord(physical).is_some_and(|c| c.row == 0 && c.col == 0)
    }

    pub fn physical(&self, node: NodeId) -> Result<u32, TopologyError> {
        self.map
            .to_physical
            .get(node.0 as usize)
            .copied()
            .flatten()
            .ok_or(TopologyError::Unmapped(node))
    }

    pub fn occupant(&self, physical: u32) -> Option<NodeId> {
        self.map.to_virtual.get(physical as usize).copied().flatten()
    }

    /// Virtual ids available to neurons in fill order: every core for flat
    /// topologies, cluster-major row-major members (heads skipped) otherwise.
    pub fn placement_slots(&self) -> Vec<NodeId> {
        (0..self.cores)
            .filter(|&p| !self.is_head(p))
            .filter_map(|p| self.occupant(p))
            .collect()
    }

    /// Moves `node` to the free core `new_physical`, releasing its old core.
    pub fn remap_core(&mut self, node: NodeId, new_physical: u32) -> Result<(), TopologyError> {
        let old = self.physical(node)?;
        if self.is_head(old) {
            return Err(TopologyError::HeadRemap(node));
        }
        if new_physical >= self.cores {
            return Err(TopologyError::NoSuchCore(new_physical));
        }
        if let Some(by) = self.occupant(new_physical) {
            return Err(TopologyError::Occupied { core: new_physical, by });
        }
        self.map.to_virtual[old as usize] = None;
        self.map.to_virtual[new_physical as usize] = Some(node);
        self.map.to_physical[node.0 as usize] = Some(new_physical);
        Ok(())
    }

    /// Unmaps `node`, freeing its core for remapping.
    pub fn release_core(&mut self, node: NodeId) -> Result<(), TopologyError> {
        let old = self.physical(node)?;
        if self.is_head(old) {
            return Err(TopologyError::HeadRemap(node));
        }
        self.map.to_virtual[old as usize] = None;
        self.map.to_physical[node.0 as usize] = None;
        Ok(())
    }

    /// Releases every non-head core whose virtual id is not in `keep`.
    pub fn release_unused(&mut self, keep: &[NodeId]) {
        let mut used = vec![false; self.cores as usize];
        for node in keep {
            if let Some(slot) = used.get_mut(node.0 as usize) {
                *slot = true;
            }
        }
        for v in 0..self.cores {
            if !used[v as usize] {
                // heads and already-released ids stay as they are
                let _ = self.release_core(NodeId(v));
            }
        }
    }

    /// Chebyshev distance between two physical cores on the global grid.
    pub fn grid_distance(&self, a: u32, b: u32) -> Option<u32> {
        let Fabric::Empa(layout) = &self.fabric else {
            return None;
        };
        let (ar, ac) = layout.global(self.coord(a)?);
        let (br, bc) = layout.global(self.coord(b)?);
        Some(ar.abs_diff(br).max(ac.abs_diff(bc)))
    }

    /// Round-trip-free latency of a memory request from `node` through its cluster head.
    pub fn memory_latency(&self, node: NodeId) -> Result<u64, TopologyError> {
        let physical = self.physical(node)?;
        match &self.fabric {
            Fabric::Empa(layout) => {
                let coord = self.coord(physical).expect("physical core in range");
                Ok(u64::from(coord.row.max(coord.col)) * layout.spec.t_hop + layout.spec.t_mem)
            }
            _ => Err(usage("only clustered topologies have memory ports")),
        }
    }

    /// Fixed-policy route between two mapped nodes.
    pub fn route(&self, src: NodeId, dst: NodeId) -> Result<Path, TopologyError> {
        let from = self.physical(src)?;
        let to = self.physical(dst)?;
        let mut path = Path::default();
        if from == to {
            return Ok(path);
        }
        match &self.fabric {
            Fabric::Direct { t_link } => path.push(Medium::Wire { from, to }, *t_link),
            Fabric::SharedBus { t_bus, .. } => path.push(Medium::Bus { level: 0, index: 0 }, *t_bus),
            Fabric::Empa(layout) => layout.route(self, from, to, &mut path),
        }
        Ok(path)
    }
}

impl EmpaLayout {
    fn global(&self, c: CoreCoord) -> (u32, u32) {
        let cy = c.cluster / self.clusters_per_row;
        let cx = c.cluster % self.clusters_per_row;
        (cy * self.spec.rows + c.row, cx * self.spec.cols + c.col)
    }

    fn group(&self, level: usize, cluster: u32) -> u32 {
        cluster / self.group_sizes[level]
    }

    fn route(&self, topo: &Topology, from: u32, to: u32, path: &mut Path) {
        let a = topo.coord(from).expect("mapped core in range");
        let b = topo.coord(to).expect("mapped core in range");
        let t_hop = self.spec.t_hop;
        let same_chip = self.group(0, a.cluster) == self.group(0, b.cluster);
        let distance = topo.grid_distance(from, to).expect("clustered grid");
        if a.cluster == b.cluster || (same_chip && distance <= 2) {
            // neighbour wiring, relayed through members beyond two hops
            path.push(Medium::Iccb { hops: distance }, u64::from(distance) * t_hop);
            return;
        }
        let to_head = a.row.max(a.col);
        if to_head > 0 {
            path.push(Medium::Iccb { hops: to_head }, u64::from(to_head) * t_hop);
        }
        path.push(Medium::Head { cluster: a.cluster }, self.spec.t_head);
        let top = (0..self.group_sizes.len())
            .find(|&level| self.group(level, a.cluster) == self.group(level, b.cluster))
            .expect("top bus level spans every cluster");
        let bus = |level: usize, cluster: u32| Medium::Bus {
            level: (level + 1) as u8,
            index: self.group(level, cluster),
        };
        for level in 0..top {
            path.push(bus(level, a.cluster), self.spec.buses[level].t_bus);
        }
        path.push(bus(top, a.cluster), self.spec.buses[top].t_bus);
        for level in (0..top).rev() {
            path.push(bus(level, b.cluster), self.spec.buses[level].t_bus);
        }
        path.push(Medium::Head { cluster: b.cluster }, self.spec.t_head);
        let from_head = b.row.max(b.col);
        if from_head > 0 {
            path.push(Medium::Iccb { hops: from_head }, u64::from(from_head) * t_hop);
        }
    }
}
