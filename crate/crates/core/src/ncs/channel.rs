//! Lossy, delaying network channels.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AckMode {
    /// Deliveries are acknowledged to the sender within the delivery step.
    TcpLike,
    #[default]
    None,
}

/// Fixed per-origin-step outcomes overriding the random draws:
/// `None` drops the packet, `Some(d)` delivers it after `d` steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelScript(pub BTreeMap<usize, Option<usize>>);

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    loss_prob: f64,
    delay_cdf: Vec<f64>,
    ack_mode: AckMode,
    script: ChannelScript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Delivered { at_step: usize, delay: usize },
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendOutcome {
    pub delivery: Delivery,
    /// Acknowledgment flag under [`AckMode::TcpLike`], reported at the
    /// delivery step; `None` when the channel has no acknowledgments.
    pub ack: Option<bool>,
}

impl SendOutcome {
    pub fn delivered_at(&self) -> Option<usize> {
        match self.delivery {
            Delivery::Delivered { at_step, .. } => Some(at_step),
            Delivery::Lost => None,
        }
    }
}

const PMF_TOL: f64 = 1e-12;

impl Channel {
    /// `delay_pmf[d]` is the probability of a delay of `d` steps.
    pub fn new(loss_prob: f64, delay_pmf: &[f64], ack_mode: AckMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&loss_prob) {
            return Err(Error::config("loss_prob", format!("{loss_prob} is not in [0, 1]")));
        }
        if delay_pmf.is_empty() {
            return Err(Error::config("delay_pmf", "must have at least one entry"));
        }
        if delay_pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::config("delay_pmf", "entries must be non-negative"));
        }
        let total: f64 = delay_pmf.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::config("delay_pmf", format!("sums to {total}, not 1")));
        }
        let mut acc = 0.0;
        let delay_cdf = delay_pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            loss_prob,
            delay_cdf,
            ack_mode,
            script: ChannelScript::default(),
        })
    }

    pub fn perfect(ack_mode: AckMode) -> Self {
        Self::new(0.0, &[1.0], ack_mode).expect("valid perfect channel")
    }

    pub fn with_script(mut self, script: ChannelScript) -> Self {
        self.script = script;
        self
    }

    pub fn loss_prob(&self) -> f64 {
        self.loss_prob
    }

    pub fn ack_mode(&self) -> AckMode {
        self.ack_mode
    }

    pub fn max_delay(&self) -> usize {
        self.delay_cdf.len() - 1
    }

    /// Sends a packet stamped with `step`. Two uniforms are drawn per send,
    /// also for scripted steps, so the stream position only depends on the
    /// number of sends.
    pub fn send<R: Rng + ?Sized>(&self, step: usize, rng: &mut R) -> SendOutcome {
        let loss_draw: f64 = rng.random();
        let delay_draw: f64 = rng.random();
        let delivery = match self.script.0.get(&step) {
            Some(Some(delay)) => Delivery::Delivered {
                at_step: step + delay,
                delay: *delay,
            },
            Some(None) => Delivery::Lost,
            None if loss_draw < self.loss_prob => Delivery::Lost,
            None => {
                let delay = self
                    .delay_cdf
                    .iter()
                    .position(|&c| delay_draw < c)
                    .unwrap_or(self.delay_cdf.len() - 1);
                Delivery::Delivered {
                    at_step: step + delay,
                    delay,
                }
            }
        };
        let ack = match self.ack_mode {
            AckMode::TcpLike => Some(matches!(delivery, Delivery::Delivered { .. })),
            AckMode::None => None,
        };
        SendOutcome { delivery, ack }
    }
}

/// Packets scheduled for delivery, released in send order per step.
#[derive(Debug, Clone)]
pub struct InFlight<P> {
    pending: BTreeMap<usize, Vec<P>>,
}

impl<P> Default for InFlight<P> {
    fn default() -> Self {
        Self {
            pending: BTreeMap::new(),
        }
    }
}

impl<P> InFlight<P> {
    pub fn schedule(&mut self, at_step: usize, packet: P) {
        self.pending.entry(at_step).or_default().push(packet);
    }

    pub fn take_due(&mut self, step: usize) -> Vec<P> {
        self.pending.remove(&step).unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}
