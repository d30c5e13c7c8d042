use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::network::{EdgeId, RoadNetwork};
use crate::error::{Error, Result};

/// An ordered list of connected edges from origin to destination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    edges: Vec<EdgeId>,
}

impl Route {
    /// Builds a route, checking that consecutive edges meet at a node.
    pub fn new(net: &RoadNetwork, edges: Vec<EdgeId>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Network("empty route".into()));
        }
        for w in edges.windows(2) {
            if net.edge(w[0]).to != net.edge(w[1]).from {
                return Err(Error::Network(format!("{} does not lead to {}", w[0], w[1])));
            }
        }
        Ok(Route { edges })
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn origin(&self) -> EdgeId {
        self.edges[0]
    }

    pub fn destination(&self) -> EdgeId {
        *self.edges.last().expect("routes are non-empty")
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn length(&self, net: &RoadNetwork) -> f64 {
        self.edges.iter().map(|&e| net.edge(e).length).sum()
    }
}

/// Travel time estimate per edge when every edge runs at its speed limit.
pub fn free_flow_estimates(net: &RoadNetwork) -> Vec<f64> {
    net.edges().iter().map(|e| e.length / e.speed_limit).collect()
}

#[derive(Debug)]
struct Label {
    cost: f64,
    path: Vec<EdgeId>,
}

impl Label {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl Eq for Label {}
impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Label {
    // Reversed: BinaryHeap is a max-heap and we want the cheapest label.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Cheapest route from `origin` to `destination`, where a route costs the
/// sum of `estimates` over all of its edges. Equal-cost routes are broken by
/// the lexicographically smallest edge-id sequence.
pub fn fastest_path(
    net: &RoadNetwork,
    origin: EdgeId,
    destination: EdgeId,
    estimates: &[f64],
) -> Result<Route> {
    assert_eq!(estimates.len(), net.edges().len());
    let unreachable = Error::Unreachable {
        origin: origin.0,
        destination: destination.0,
    };
    if origin.0 >= net.edges().len() || destination.0 >= net.edges().len() {
        return Err(unreachable);
    }
    let mut best: Vec<Option<(f64, Vec<EdgeId>)>> = vec![None; net.edges().len()];
    let mut settled = vec![false; net.edges().len()];
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        cost: estimates[origin.0],
        path: vec![origin],
    });
    while let Some(label) = heap.pop() {
        let at = *label.path.last().unwrap();
        if settled[at.0] {
            continue;
        }
        settled[at.0] = true;
        if at == destination {
            return Route::new(net, label.path);
        }
        for next in net.successors(at) {
            if settled[next.0] || label.path.contains(&next) {
                continue;
            }
            let cost = label.cost + estimates[next.0];
            let mut path = label.path.clone();
            path.push(next);
            let improves = match &best[next.0] {
                None => true,
                Some((c, p)) => cost
                    .total_cmp(c)
                    .then_with(|| path.cmp(p))
                    .is_lt(),
            };
            if improves {
                best[next.0] = Some((cost, path.clone()));
                heap.push(Label { cost, path });
            }
        }
    }
    Err(unreachable)
}
