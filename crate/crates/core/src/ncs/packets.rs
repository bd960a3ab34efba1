use crate::linalg::Vector;

/// Control sequence `U_k = [u_{k|k}, …, u_{k+N_A|k}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPacket {
    pub origin_step: usize,
    pub inputs: Vec<Vector>,
}

impl ControlPacket {
    /// Input intended for `step`, if the sequence covers it.
    pub fn input_for(&self, step: usize) -> Option<&Vector> {
        step.checked_sub(self.origin_step).and_then(|j| self.inputs.get(j))
    }
}

/// Local information vector `x_i(k)` of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPacket {
    pub sensor_id: usize,
    pub origin_step: usize,
    pub payload: Vector,
}
