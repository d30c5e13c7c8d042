//! Co-simulation of single-lane urban road traffic and vehicle-to-infrastructure
//! messaging, with traffic lights driven by junction agents that elect an
//! approaching vehicle and let it request a green phase.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: millisecond clock, event queue, named random streams.
//! - [`road`]: one-lane road graphs, the two experiment networks, routing.
//! - [`traffic`]: demand, car-following, traffic light device.
//! - [`comms`]: radio range, beacons, reliable streams over a delay/loss channel.
//! - [`control`]: junction and vehicle agents, maps, election, actuation.
//! - [`world`]: the event loop binding everything together.
//! - [`metrics`]: indicators computed from the run logs.
//! - [`scenario`]: configuration, experiment generators, batch runs.

pub mod comms;
pub mod control;
pub mod error;
pub mod metrics;
pub mod road;
pub mod scenario;
pub mod sim;
pub mod traffic;
pub mod world;

pub use error::{ConfigError, Error, Result};
pub use sim::SimTime;
