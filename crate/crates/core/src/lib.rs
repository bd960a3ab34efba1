//! Sequence-based networked control of linear plants observed by multiple
//! distributed sensors.
//!
//! Sensors run a hypothesizing distributed Kalman filter and transmit only
//! an information-like vector; the controller fuses whatever arrives,
//! removes the hypothesis-induced bias with correction matrices and adds
//! back the contribution of the control inputs the sensors never saw.

pub mod error;
pub mod experiment;
pub mod hkf;
pub mod linalg;
pub mod model;
pub mod ncs;
pub mod oracle;
pub mod scenario;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
