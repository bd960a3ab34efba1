use crate::linalg::Vector;
use crate::ncs::packets::ControlPacket;

/// Actuator buffer holding the sequence with the most recent origin step.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorBuffer {
    stored: Option<ControlPacket>,
    default_input: Vector,
}

/// Applied input and the origin of the sequence it came from (`None` when
/// the default input was used).
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub input: Vector,
    pub origin: Option<usize>,
}

impl ActuatorBuffer {
    pub fn new(default_input: Vector) -> Self {
        Self {
            stored: None,
            default_input,
        }
    }

    pub fn stored(&self) -> Option<&ControlPacket> {
        self.stored.as_ref()
    }

    pub fn default_input(&self) -> &Vector {
        &self.default_input
    }

    /// Stores arriving sequences that are strictly newer than the buffer and
    /// returns the input for `step`.
    pub fn actuator_step(&mut self, arriving: &[ControlPacket], step: usize) -> Applied {
        for p in arriving {
            let newer = self.stored.as_ref().is_none_or(|s| p.origin_step > s.origin_step);
            if newer {
                self.stored = Some(p.clone());
            }
        }
        match self
            .stored
            .as_ref()
            .and_then(|s| Some((s.input_for(step)?, s.origin_step)))
        {
            Some((u, origin)) => Applied {
                input: u.clone(),
                origin: Some(origin),
            },
            None => Applied {
                input: self.default_input.clone(),
                origin: None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(origin: usize, values: &[f64]) -> ControlPacket {
        ControlPacket {
            origin_step: origin,
            inputs: values.iter().map(|&v| Vector::from_element(1, v)).collect(),
        }
    }

    #[test]
    fn fresh_packet_applies_first_entry() {
        let mut buf = ActuatorBuffer::new(Vector::from_element(1, -9.0));
        let a = buf.actuator_step(&[packet(4, &[1.5, 2.0])], 4);
        assert_eq!(a.input[0], 1.5);
        assert_eq!(a.origin, Some(4));
    }

    #[test]
    fn exhausted_buffer_applies_default() {
        let mut buf = ActuatorBuffer::new(Vector::from_element(1, -9.0));
        buf.actuator_step(&[packet(0, &[1.0, 2.0, 3.0])], 0);
        assert_eq!(buf.actuator_step(&[], 1).input[0], 2.0);
        assert_eq!(buf.actuator_step(&[], 2).input[0], 3.0);
        // N_A + 1 = 3 steps without packets after the sequence started.
        let a = buf.actuator_step(&[], 3);
        assert_eq!(a.input[0], -9.0);
        assert_eq!(a.origin, None);
    }

    #[test]
    fn delayed_packet_into_empty_buffer() {
        let mut buf = ActuatorBuffer::new(Vector::from_element(1, 0.0));
        let a = buf.actuator_step(&[packet(2, &[7.0, 8.0])], 3);
        assert_eq!(a.input[0], 8.0);
    }

    #[test]
    fn older_packets_never_replace_newer() {
        let mut buf = ActuatorBuffer::new(Vector::from_element(1, 0.0));
        buf.actuator_step(&[packet(5, &[1.0, 1.0, 1.0])], 5);
        let a = buf.actuator_step(&[packet(4, &[2.0, 2.0, 2.0])], 6);
        assert_eq!(a.origin, Some(5));
        // Out-of-order arrivals within one step resolve to the newest.
        let mut buf = ActuatorBuffer::new(Vector::from_element(1, 0.0));
        let a = buf.actuator_step(&[packet(3, &[3.0, 3.0]), packet(2, &[2.0, 2.0])], 3);
        assert_eq!(a.origin, Some(3));
    }
}
