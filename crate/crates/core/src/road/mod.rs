//! Directed one-lane road graphs, the experiment networks and fastest-path
//! routing.

mod network;
mod routing;

pub use network::{
    Edge, EdgeId, Group, Node, NodeId, NodeKind, Point, RoadNetwork, Zone, CENTER_ZONE,
    DEFAULT_SPEED_LIMIT,
};
pub use routing::{fastest_path, free_flow_estimates, Route};
