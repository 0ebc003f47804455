//! Navigation methods: costmaps, social layer, grid and time-expanded A*,
//! path tracking, and the policy interface every method implements.

pub mod control;
pub mod costmap;
pub mod grid_astar;
pub mod policy;
pub mod social;
pub mod time_astar;

use thiserror::Error;

pub use control::{local_control, ControlError, ControlLimits, PlanRef, TrackingParams};
pub use costmap::{build_static_costmap, Cell, Costmap, LETHAL};
pub use grid_astar::{plan_grid, GridPath};
pub use policy::{
    make_policy, make_policy_with, NavParams, Observation, Policy, PolicyError, PolicyFactory,
    PolicyRegistry, ProcessPolicy, StreamPolicy,
};
pub use social::{apply_social_layer, SocialLayerParams};
pub use time_astar::{plan_time_astar, TdpParams, TimedPlan, TimedState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("{which} lies outside the costmap")]
    OutOfMap { which: &'static str },
    #[error("goal unreachable")]
    Unreachable,
    /// No path exists even without people.
    #[error("goal blocked by static obstacles")]
    Blocked,
    /// A static path exists but predicted people block it for the whole horizon.
    #[error("no path within the prediction horizon")]
    HorizonTooShort,
    #[error("invalid planner parameter: {0}")]
    InvalidParameter(String),
}
