use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default urban speed limit, 50 km/h.
pub const DEFAULT_SPEED_LIMIT: f64 = 13.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Signalised junction.
    Junction,
    /// Open end of an external stub where vehicles enter or leave.
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
    pub kind: NodeKind,
}

/// A directed single-lane road.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
    pub speed_limit: f64,
    pub is_external: bool,
}

/// The two antagonistic signal groups at a junction. Group A holds the
/// approaches that run mostly along the x axis, group B the others.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Group::A => 0,
            Group::B => 1,
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
        })
    }
}

/// One of the nine demand zones of a grid. Zone ids follow a 3x3 tiling,
/// `row * 3 + col`, row 0 at the smallest y; 4 is the centre.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Zone {
    pub id: u8,
    /// Edges where vehicles originating in the zone are inserted.
    pub entries: Vec<EdgeId>,
    /// Edges at whose end vehicles destined for the zone arrive.
    pub exits: Vec<EdgeId>,
}

pub const CENTER_ZONE: u8 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    incoming: Vec<Vec<EdgeId>>,
    outgoing: Vec<Vec<EdgeId>>,
    zones: Vec<Zone>,
}

impl RoadNetwork {
    /// Assembles a network, checking that every edge references existing
    /// nodes and has positive length.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, zones: Vec<Zone>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0 != i {
                return Err(Error::Network(format!("node {} stored at index {i}", n.id)));
            }
        }
        let mut incoming = vec![Vec::new(); nodes.len()];
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.id.0 != i {
                return Err(Error::Network(format!("edge {} stored at index {i}", e.id)));
            }
            if e.from.0 >= nodes.len() || e.to.0 >= nodes.len() {
                return Err(Error::Network(format!("edge {} has a missing endpoint", e.id)));
            }
            if !(e.length > 0.0) || !e.length.is_finite() {
                return Err(Error::Network(format!("edge {} has length {}", e.id, e.length)));
            }
            if !(e.speed_limit > 0.0) {
                return Err(Error::Network(format!("edge {} has no speed limit", e.id)));
            }
            outgoing[e.from.0].push(e.id);
            incoming[e.to.0].push(e.id);
        }
        for z in &zones {
            for e in z.entries.iter().chain(&z.exits) {
                if e.0 >= edges.len() {
                    return Err(Error::Network(format!("zone {} references {e}", z.id)));
                }
            }
        }
        Ok(RoadNetwork {
            nodes,
            edges,
            incoming,
            outgoing,
            zones,
        })
    }

    /// One junction at the origin with a west and a south approach, each
    /// continuing straight through to an exit edge of the same length.
    pub fn build_one_junction(edge_length: f64) -> Result<Self> {
        if !(edge_length > 0.0) {
            return Err(Error::Network(format!("edge length {edge_length} must be positive")));
        }
        let l = edge_length;
        let node = |id, x, y, kind| Node {
            id: NodeId(id),
            pos: Point::new(x, y),
            kind,
        };
        let nodes = vec![
            node(0, 0.0, 0.0, NodeKind::Junction),
            node(1, -l, 0.0, NodeKind::Boundary),
            node(2, l, 0.0, NodeKind::Boundary),
            node(3, 0.0, -l, NodeKind::Boundary),
            node(4, 0.0, l, NodeKind::Boundary),
        ];
        let edge = |id, from, to| Edge {
            id: EdgeId(id),
            from: NodeId(from),
            to: NodeId(to),
            length: l,
            speed_limit: DEFAULT_SPEED_LIMIT,
            is_external: true,
        };
        let edges = vec![edge(0, 1, 0), edge(1, 0, 2), edge(2, 3, 0), edge(3, 0, 4)];
        RoadNetwork::new(nodes, edges, Vec::new())
    }

    /// An `n x n` lattice of junctions spaced `edge_length` apart. Every
    /// perimeter junction gets one external stub (an entry and an exit edge)
    /// per outward direction, so corners carry two.
    pub fn build_grid(n: usize, edge_length: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Network(format!("grid size {n} must be at least 2")));
        }
        if !(edge_length > 0.0) {
            return Err(Error::Network(format!("edge length {edge_length} must be positive")));
        }
        let l = edge_length;
        let junction = |i: usize, j: usize| j * n + i;
        let mut nodes: Vec<Node> = (0..n * n)
            .map(|id| Node {
                id: NodeId(id),
                pos: Point::new((id % n) as f64 * l, (id / n) as f64 * l),
                kind: NodeKind::Junction,
            })
            .collect();
        let mut edges = Vec::new();
        let push_edge = |edges: &mut Vec<Edge>, from: usize, to: usize, external: bool| {
            let id = EdgeId(edges.len());
            edges.push(Edge {
                id,
                from: NodeId(from),
                to: NodeId(to),
                length: l,
                speed_limit: DEFAULT_SPEED_LIMIT,
                is_external: external,
            });
            id
        };
        for j in 0..n {
            for i in 0..n {
                let a = junction(i, j);
                if i + 1 < n {
                    let b = junction(i + 1, j);
                    push_edge(&mut edges, a, b, false);
                    push_edge(&mut edges, b, a, false);
                }
                if j + 1 < n {
                    let b = junction(i, j + 1);
                    push_edge(&mut edges, a, b, false);
                    push_edge(&mut edges, b, a, false);
                }
            }
        }

        let tile = |k: usize| -> usize {
            if k == 0 {
                0
            } else if k == n - 1 {
                2
            } else {
                1
            }
        };
        let mut zones: Vec<Zone> = (0..9)
            .map(|id| Zone {
                id,
                ..Zone::default()
            })
            .collect();
        for j in 0..n {
            for i in 0..n {
                let dirs: [(bool, f64, f64); 4] = [
                    (i == 0, -1.0, 0.0),
                    (i == n - 1, 1.0, 0.0),
                    (j == 0, 0.0, -1.0),
                    (j == n - 1, 0.0, 1.0),
                ];
                let a = junction(i, j);
                let zone = tile(j) * 3 + tile(i);
                for (on_side, dx, dy) in dirs {
                    if !on_side {
                        continue;
                    }
                    let p = nodes[a].pos;
                    let b = nodes.len();
                    nodes.push(Node {
                        id: NodeId(b),
                        pos: Point::new(p.x + dx * l, p.y + dy * l),
                        kind: NodeKind::Boundary,
                    });
                    let entry = push_edge(&mut edges, b, a, true);
                    let exit = push_edge(&mut edges, a, b, true);
                    zones[zone].entries.push(entry);
                    zones[zone].exits.push(exit);
                }
            }
        }
        // The centre zone uses the internal edges between the interior junctions.
        let interior = |node: NodeId| -> bool {
            node.0 < n * n && tile(node.0 % n) == 1 && tile(node.0 / n) == 1
        };
        let center: Vec<EdgeId> = edges
            .iter()
            .filter(|e| !e.is_external && interior(e.from) && interior(e.to))
            .map(|e| e.id)
            .collect();
        zones[CENTER_ZONE as usize].entries = center.clone();
        zones[CENTER_ZONE as usize].exits = center;
        RoadNetwork::new(nodes, edges, zones)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn incoming(&self, node: NodeId) -> &[EdgeId] {
        &self.incoming[node.0]
    }

    pub fn outgoing(&self, node: NodeId) -> &[EdgeId] {
        &self.outgoing[node.0]
    }

    pub fn junctions(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Junction)
    }

    pub fn junction_count(&self) -> usize {
        self.junctions().count()
    }

    /// Edges reachable from `edge` through its downstream node, excluding the
    /// immediate U-turn.
    pub fn successors(&self, edge: EdgeId) -> impl Iterator<Item = EdgeId> + '_ {
        let e = self.edge(edge);
        self.outgoing(e.to)
            .iter()
            .copied()
            .filter(move |&s| {
                let s = self.edge(s);
                !(s.to == e.from && s.from == e.to)
            })
    }

    /// Number of road links when each opposing pair of directed edges is
    /// counted once.
    pub fn undirected_edge_count(&self) -> usize {
        let mut pairs: Vec<(NodeId, NodeId)> = self
            .edges
            .iter()
            .map(|e| (e.from.min(e.to), e.from.max(e.to)))
            .collect();
        pairs.sort();
        pairs.dedup();
        pairs.len()
    }

    /// Coordinates of a point `offset` metres along `edge`.
    pub fn position_on(&self, edge: EdgeId, offset: f64) -> Point {
        let e = self.edge(edge);
        let a = self.node(e.from).pos;
        let b = self.node(e.to).pos;
        let f = (offset / e.length).clamp(0.0, 1.0);
        Point::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
    }

    /// Signal group of an edge entering a junction.
    pub fn group_of(&self, edge: EdgeId) -> Group {
        let e = self.edge(edge);
        let a = self.node(e.from).pos;
        let b = self.node(e.to).pos;
        if (b.x - a.x).abs() >= (b.y - a.y).abs() {
            Group::A
        } else {
            Group::B
        }
    }

    /// Unit vector pointing from the junction towards the upstream end of
    /// the incoming `edge`.
    pub fn approach_direction(&self, edge: EdgeId) -> (f64, f64) {
        let e = self.edge(edge);
        let a = self.node(e.from).pos;
        let b = self.node(e.to).pos;
        let d = a.distance(b);
        if d == 0.0 {
            (1.0, 0.0)
        } else {
            ((a.x - b.x) / d, (a.y - b.y) / d)
        }
    }

    /// Plain-text listing, one record per line.
    pub fn export_listing(&self) -> String {
        let mut out = String::from("# road network listing\n");
        for n in &self.nodes {
            let kind = match n.kind {
                NodeKind::Junction => "junction",
                NodeKind::Boundary => "boundary",
            };
            let _ = writeln!(out, "node {} {} {} {kind}", n.id.0, n.pos.x, n.pos.y);
        }
        for e in &self.edges {
            let kind = if e.is_external { "external" } else { "internal" };
            let _ = writeln!(
                out,
                "edge {} {} {} {} {} {kind}",
                e.id.0, e.from.0, e.to.0, e.length, e.speed_limit
            );
        }
        for z in &self.zones {
            let join = |v: &[EdgeId]| {
                v.iter()
                    .map(|e| e.0.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(out, "zone {} {} {}", z.id, join(&z.entries), join(&z.exits));
        }
        out
    }

    /// Parses the format written by [`RoadNetwork::export_listing`].
    pub fn parse_listing(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Network(format!("line {}: {msg}", line + 1));
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut zones = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| bad(ln, "expected a number"))
            };
            let idx = |i: usize| -> Result<usize> {
                f.get(i)
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| bad(ln, "expected an index"))
            };
            match f[0] {
                "node" if f.len() == 5 => {
                    let kind = match f[4] {
                        "junction" => NodeKind::Junction,
                        "boundary" => NodeKind::Boundary,
                        _ => return Err(bad(ln, "unknown node kind")),
                    };
                    nodes.push(Node {
                        id: NodeId(idx(1)?),
                        pos: Point::new(num(2)?, num(3)?),
                        kind,
                    });
                }
                "edge" if f.len() == 7 => {
                    let is_external = match f[6] {
                        "external" => true,
                        "internal" => false,
                        _ => return Err(bad(ln, "unknown edge kind")),
                    };
                    edges.push(Edge {
                        id: EdgeId(idx(1)?),
                        from: NodeId(idx(2)?),
                        to: NodeId(idx(3)?),
                        length: num(4)?,
                        speed_limit: num(5)?,
                        is_external,
                    });
                }
                "zone" if (2..=4).contains(&f.len()) => {
                    let list = |i: usize| -> Result<Vec<EdgeId>> {
                        match f.get(i) {
                            None => Ok(Vec::new()),
                            Some(s) => s
                                .split(',')
                                .map(|t| {
                                    t.parse::<usize>()
                                        .map(EdgeId)
                                        .map_err(|_| bad(ln, "bad zone edge list"))
                                })
                                .collect(),
                        }
                    };
                    zones.push(Zone {
                        id: idx(1)? as u8,
                        entries: list(2)?,
                        exits: list(3)?,
                    });
                }
                _ => return Err(bad(ln, "unrecognised record")),
            }
        }
        RoadNetwork::new(nodes, edges, zones)
    }
}
