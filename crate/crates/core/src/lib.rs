//! Reactive mobile manipulation on-the-move in a planar world.

pub mod base_placement;
pub mod global_planner;
pub mod holistic;
pub mod local_planner;
pub mod path_metrics;
pub mod sim;
pub mod world;
