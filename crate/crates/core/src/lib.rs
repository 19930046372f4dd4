//! Joint trajectory, bandwidth and power planning for a single UAV serving
//! uplink, downlink and relay ground users.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] loads and validates problem instances.
//! * [`channel`] holds the LoS rate model and its concave surrogate.
//! * [`subproblems`] solves the allocation and trajectory blocks.
//! * [`optimizer`] runs block coordinate descent and the search over `T`.
//! * [`routing`] builds initial trajectories (TSP, pickup-and-delivery,
//!   disk neighbourhoods, circle).
//! * [`audit`] re-checks a finished plan from first principles.
//! * [`cli`] is the command-line front end.

pub mod audit;
pub mod channel;
pub mod cli;
mod conic;
pub mod error;
pub mod generate;
pub mod geometry;
pub mod io;
pub mod optimizer;
pub mod routing;
pub mod scenario;
pub mod subproblems;

pub use error::{Error, Result};
pub use geometry::Point;
pub use scenario::{Mode, Scenario};
