//! Node placement and radio adjacency for the three-tier mesh.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Igw,
    Mr,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Position {
    fn from((x, y): (f64, f64)) -> Self {
        Position { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub role: Role,
    pub position: Position,
    pub radio_range: f64,
    /// Hop count to the selected gateway, learned at run time from GW_INFO.
    pub gateway_hops: Option<u32>,
    pub selfish: bool,
    /// Id of the governing mesh router.
    pub subnet_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub area: (f64, f64),
    pub igw_positions: Vec<(f64, f64)>,
    pub mr_positions: Vec<(f64, f64)>,
    pub n_mcs: usize,
    pub radio_range: f64,
    /// Range between two mesh routers (their backbone radio).
    pub mr_backbone_range: f64,
    /// Every client is placed within `placement_factor * radio_range` of a node already
    /// placed in its subnet, so each subnet has a connected core of solid links.
    pub placement_factor: f64,
    pub selfish_fraction: f64,
    pub max_placement_attempts: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            area: (1500.0, 1500.0),
            igw_positions: vec![
                (100.0, 100.0),
                (100.0, 1400.0),
                (1400.0, 100.0),
                (1400.0, 1400.0),
                (700.0, 700.0),
            ],
            mr_positions: vec![
                (500.0, 500.0),
                (500.0, 1000.0),
                (1000.0, 500.0),
                (1000.0, 1000.0),
                (750.0, 750.0),
            ],
            n_mcs: 45,
            radio_range: 250.0,
            mr_backbone_range: 1000.0,
            placement_factor: 0.75,
            selfish_fraction: 0.0,
            max_placement_attempts: 2000,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.area.0 > 0.0 && self.area.1 > 0.0) {
            return bad("area dimensions must be positive");
        }
        if !(self.radio_range > 0.0 && self.mr_backbone_range > 0.0) {
            return bad("radio ranges must be positive");
        }
        if !(self.placement_factor > 0.0 && self.placement_factor <= 1.0) {
            return bad("placement_factor must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.selfish_fraction) {
            return bad("selfish_fraction must lie in [0, 1]");
        }
        let inside = |&(x, y): &(f64, f64)| x >= 0.0 && y >= 0.0 && x <= self.area.0 && y <= self.area.1;
        if !self.igw_positions.iter().all(inside) || !self.mr_positions.iter().all(inside) {
            return bad("IGW and MR positions must lie inside the area");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub nodes: Vec<NodeRecord>,
    /// `adjacent[a][b]` iff `a` and `b` are within radio range of each other.
    adjacent: Vec<Vec<bool>>,
    neighbors: Vec<Vec<NodeId>>,
    distance: Vec<Vec<f64>>,
}

impl Topology {
    /// Builds a topology from explicit records. Adjacency follows [`link_range`].
    pub fn from_nodes(nodes: Vec<NodeRecord>) -> Self {
        let n = nodes.len();
        let mut adjacent = vec![vec![false; n]; n];
        let mut distance = vec![vec![0.0; n]; n];
        let mut neighbors = vec![Vec::new(); n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let d = nodes[a].position.distance(&nodes[b].position);
                distance[a][b] = d;
                if d <= link_range(&nodes[a], &nodes[b]) {
                    adjacent[a][b] = true;
                    neighbors[a].push(b);
                }
            }
        }
        Topology {
            nodes,
            adjacent,
            neighbors,
            distance,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacent[a][b]
    }

    pub fn neighbors(&self, a: NodeId) -> &[NodeId] {
        &self.neighbors[a]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.distance[a][b]
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.role == role).map(|n| n.id).collect()
    }

    /// Every node governed by mesh router `mr`, including the router and its gateways.
    pub fn subnet_members(&self, mr: NodeId) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.subnet_id == mr).map(|n| n.id).collect()
    }

    /// The gateway attached to subnet `mr`, if any (lowest id when several).
    pub fn subnet_gateway(&self, mr: NodeId) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.role == Role::Igw && n.subnet_id == mr)
            .map(|n| n.id)
    }

    /// Whether every node can reach every other over radio links alone.
    pub fn is_connected(&self) -> bool {
        connected(self.len(), |a, b| self.adjacent[a][b])
    }
}

/// Link range between two nodes: the smaller of the two radio ranges.
pub fn link_range(a: &NodeRecord, b: &NodeRecord) -> f64 {
    a.radio_range.min(b.radio_range)
}

fn connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for b in 0..n {
            if !seen[b] && edge(a, b) {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Index into `mrs` of the nearest mesh router; ties go to the lower id.
fn nearest(mrs: &[Position], p: &Position) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in mrs.iter().enumerate() {
        let d = m.distance(p);
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}

/// Places the clients and returns the full node set.
///
/// Gateways come first in id order, then mesh routers, then clients. Each client is drawn
/// uniformly from the area, restricted to its router's Voronoi cell and to the
/// neighbourhood of nodes already placed in the same subnet; a subnet is redrawn until its
/// router and gateways are joined by solid links.
pub fn build_topology<R: Rng + ?Sized>(cfg: &TopologyConfig, rng: &mut R) -> Result<Topology, SimError> {
    cfg.validate()?;
    let n_mrs = cfg.mr_positions.len();
    if n_mrs == 0 {
        let total = cfg.igw_positions.len() + cfg.n_mcs;
        if total <= 1 || cfg.n_mcs > 0 {
            return Err(SimError::DisconnectedTopology(
                "no mesh router to attach clients to".into(),
            ));
        }
    }
    let mr_pos: Vec<Position> = cfg.mr_positions.iter().copied().map(Position::from).collect();
    let igw_pos: Vec<Position> = cfg.igw_positions.iter().copied().map(Position::from).collect();
    let n_igw = igw_pos.len();
    let mr_id = |i: usize| n_igw + i;

    let mut nodes = Vec::new();
    for (i, p) in igw_pos.iter().enumerate() {
        let sub = nearest(&mr_pos, p).map(mr_id).unwrap_or(i);
        nodes.push(NodeRecord {
            id: i,
            role: Role::Igw,
            position: *p,
            radio_range: cfg.radio_range,
            gateway_hops: Some(0),
            selfish: false,
            subnet_id: sub,
        });
    }
    for (i, p) in mr_pos.iter().enumerate() {
        nodes.push(NodeRecord {
            id: mr_id(i),
            role: Role::Mr,
            position: *p,
            radio_range: cfg.mr_backbone_range,
            gateway_hops: None,
            selfish: false,
            subnet_id: mr_id(i),
        });
    }

    let solid = cfg.placement_factor * cfg.radio_range;
    for k in 0..n_mrs {
        let quota = cfg.n_mcs / n_mrs + usize::from(k < cfg.n_mcs % n_mrs);
        let anchors: Vec<Position> = std::iter::once(mr_pos[k])
            .chain(
                nodes
                    .iter()
                    .filter(|n| n.role == Role::Igw && n.subnet_id == mr_id(k))
                    .map(|n| n.position),
            )
            .collect();
        let placed = place_subnet(cfg, &mr_pos, k, &anchors, quota, solid, rng)?;
        for p in placed {
            let id = nodes.len();
            nodes.push(NodeRecord {
                id,
                role: Role::Mc,
                position: p,
                radio_range: cfg.radio_range,
                gateway_hops: None,
                selfish: false,
                subnet_id: mr_id(k),
            });
        }
    }

    let mcs: Vec<NodeId> = nodes.iter().filter(|n| n.role == Role::Mc).map(|n| n.id).collect();
    let n_selfish = (cfg.selfish_fraction * mcs.len() as f64).round() as usize;
    if n_selfish > 0 {
        for i in sample(rng, mcs.len(), n_selfish.min(mcs.len())).into_iter() {
            nodes[mcs[i]].selfish = true;
        }
    }

    let topo = Topology::from_nodes(nodes);
    for n in &topo.nodes {
        if topo.neighbors(n.id).is_empty() {
            return Err(SimError::DisconnectedTopology(format!(
                "node {} has no neighbor in range",
                n.id
            )));
        }
    }
    if !topo.is_connected() {
        return Err(SimError::DisconnectedTopology("radio graph is not connected".into()));
    }
    Ok(topo)
}

fn place_subnet<R: Rng + ?Sized>(
    cfg: &TopologyConfig,
    mr_pos: &[Position],
    k: usize,
    anchors: &[Position],
    quota: usize,
    solid: f64,
    rng: &mut R,
) -> Result<Vec<Position>, SimError> {
    const DRAWS_PER_NODE: usize = 5000;
    'attempt: for _ in 0..cfg.max_placement_attempts {
        let mut pts: Vec<Position> = anchors.to_vec();
        for _ in 0..quota {
            let mut accepted = None;
            for _ in 0..DRAWS_PER_NODE {
                let p = Position::new(rng.gen_range(0.0..=cfg.area.0), rng.gen_range(0.0..=cfg.area.1));
                if nearest(mr_pos, &p) != Some(k) {
                    continue;
                }
                if pts.iter().any(|q| q.distance(&p) <= solid) {
                    accepted = Some(p);
                    break;
                }
            }
            match accepted {
                Some(p) => pts.push(p),
                None => continue 'attempt,
            }
        }
        // Router and gateways must be joined through solid links. Within one subnet every
        // link involves a client or gateway radio, so the client range applies throughout.
        if connected(pts.len(), |a, b| pts[a].distance(&pts[b]) <= solid) {
            return Ok(pts.split_off(anchors.len()));
        }
    }
    Err(SimError::DisconnectedTopology(format!(
        "could not place a connected subnet around mesh router {k}"
    )))
}
