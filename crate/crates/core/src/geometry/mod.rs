//! Interface geometry: level sets, advection, learned flow maps and their
//! adaptive partitioning, and zero-set utilities.

pub mod adaptive;
pub mod flowmap;
pub mod levelset;
pub mod rk4;
pub mod zeroset;

pub use adaptive::{adaptive_time_stepping, Interval, MonitoredMap, Partition, StepEvent};
pub use flowmap::{fit_flow_map, grid_nodes, CompositeLevelSet, FitReport, FlowMap, FlowMapLoss, MapJet};
pub use levelset::{InitialLevelSet, LevelSet, LevelSetSample, RigidMotion};
pub use rk4::{rk4_advect, TrajectoryTable};
pub use zeroset::{hausdorff_distance, project_to_zero_set, zero_crossings_2d};
