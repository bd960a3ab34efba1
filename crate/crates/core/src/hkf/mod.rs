//! Hypothesizing distributed Kalman filter: shared gain schedule,
//! sensor-side recursions and controller-side fusion.

pub mod adapt;
pub mod fusion;
pub mod local;
pub mod schedule;

pub use adapt::{adapt_hgmm, AdaptConfig};
pub use fusion::{debias, fuse, CaughtUp, FusedVariables, FusionCenter, InputLog, NodeLedger, NodeVars};
pub use local::{LocalEstimateState, LocalFilter, Stage};
pub use schedule::{build_schedule, Hgmm, HypothesizedSchedule, ScheduleInit};
