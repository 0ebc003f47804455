//! Deterministic social-navigation benchmarking.
//!
//! The crate reproduces a carton-carrying human/robot trial protocol in a
//! fixed-step 2D simulator, evaluates three planner families (plain costmap,
//! Gaussian social layer, time-expanded prediction) plus a scripted
//! human-like agent, and computes the robot-centered ratios and
//! questionnaire statistics used to compare them.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod geometry;
pub mod metrics;
pub mod planners;
pub mod rosas;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod wire;

pub use geometry::Vec2;
pub use scenario::{build_scenario, Layout, MethodId, ScenarioConfig, ScenarioOverrides};
