//! Networked control loop: channels, actuator buffer, sequence-based
//! controller and cost accounting.

pub mod actuator;
pub mod channel;
pub mod controller;
pub mod cost;
pub mod packets;
pub mod sim;

pub use actuator::{ActuatorBuffer, Applied};
pub use channel::{AckMode, Channel, ChannelScript, Delivery, InFlight, SendOutcome};
pub use controller::{
    default_feedback_law, AugmentedState, ConstantLaw, FeedbackLaw, LqrHorizon, LqrLaw, SequenceController,
};
pub use cost::CostAccumulator;
pub use packets::{ControlPacket, MeasurementPacket};
pub use sim::{run_closed_loop, EstimatorKind, EstimatorSettings, InitMode, RunOutput, Scenario, TraceRecord};
