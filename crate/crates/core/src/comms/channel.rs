use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Parametric stand-in for the radio MAC/PHY: a load dependent one-way
/// delay with uniform jitter and independent per-attempt loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub base_delay_ms: u64,
    pub per_active_node_delay_ms: u64,
    /// Half-width of the uniform jitter.
    pub jitter_ms: u64,
    pub loss_probability: f64,
    pub retransmit_timeout_ms: u64,
    pub handshake_rtts: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            base_delay_ms: 5,
            per_active_node_delay_ms: 2,
            jitter_ms: 2,
            loss_probability: 0.02,
            retransmit_timeout_ms: 200,
            handshake_rtts: 1.5,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(ConfigError::domain(
                "channel.loss_probability",
                self.loss_probability,
                "[0, 1)",
            ));
        }
        if self.retransmit_timeout_ms == 0 {
            return Err(ConfigError::domain("channel.retransmit_timeout_ms", 0, ">= 1"));
        }
        if !(self.handshake_rtts > 0.0) || !self.handshake_rtts.is_finite() {
            return Err(ConfigError::domain(
                "channel.handshake_rtts",
                self.handshake_rtts,
                "> 0",
            ));
        }
        Ok(())
    }

    /// Number of one-way legs in a connection handshake.
    pub fn handshake_legs(&self) -> u32 {
        ((2.0 * self.handshake_rtts).round() as u32).max(1)
    }
}

/// Outcome of a reliable transfer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub delay_ms: u64,
    /// Attempts including the successful one.
    pub attempts: u32,
}

pub struct Channel {
    cfg: ChannelConfig,
    loss: ChaCha8Rng,
    jitter: ChaCha8Rng,
}

impl Channel {
    pub fn new(cfg: ChannelConfig, loss: ChaCha8Rng, jitter: ChaCha8Rng) -> Self {
        Channel { cfg, loss, jitter }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// One attempt's propagation delay with `active` established
    /// connections at the receiving IA. Always at least 1 ms.
    pub fn one_way_delay(&mut self, active: usize) -> u64 {
        let nominal = (self.cfg.base_delay_ms + self.cfg.per_active_node_delay_ms * active as u64) as i64;
        let j = self.cfg.jitter_ms as i64;
        let jitter = if j > 0 {
            self.jitter.gen_range(-j..=j)
        } else {
            0
        };
        (nominal + jitter).max(1) as u64
    }

    fn lost(&mut self) -> bool {
        self.cfg.loss_probability > 0.0 && self.loss.gen::<f64>() < self.cfg.loss_probability
    }

    /// Delay of a stream message: each lost attempt costs a retransmission
    /// timeout, the successful one a fresh one-way delay.
    pub fn reliable(&mut self, active: usize) -> Transfer {
        let mut delay = 0;
        let mut attempts = 1;
        while self.lost() {
            delay += self.cfg.retransmit_timeout_ms;
            attempts += 1;
        }
        delay += self.one_way_delay(active);
        Transfer {
            delay_ms: delay,
            attempts,
        }
    }

    /// Datagram delivery: `None` when lost, never retransmitted.
    pub fn datagram(&mut self, active: usize) -> Option<u64> {
        if self.lost() {
            None
        } else {
            Some(self.one_way_delay(active))
        }
    }

    /// Time to establish a connection: one reliable leg per half round trip.
    pub fn handshake(&mut self, active: usize) -> u64 {
        (0..self.cfg.handshake_legs())
            .map(|_| self.reliable(active).delay_ms)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{streams, RngStream};

    fn channel(cfg: ChannelConfig, seed: u64) -> Channel {
        Channel::new(
            cfg,
            RngStream::new(seed, streams::CHANNEL_LOSS).rng(),
            RngStream::new(seed, streams::CHANNEL_JITTER).rng(),
        )
    }

    fn quiet() -> ChannelConfig {
        ChannelConfig {
            jitter_ms: 0,
            loss_probability: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn load_term_examples() {
        let mut ch = channel(quiet(), 1);
        assert_eq!(ch.one_way_delay(1), 7);
        assert_eq!(ch.one_way_delay(50), 105);
        assert_eq!(ch.reliable(1), Transfer { delay_ms: 7, attempts: 1 });
    }

    #[test]
    fn delay_is_nondecreasing_in_load() {
        let mut ch = channel(quiet(), 1);
        let delays: Vec<u64> = (0..200).map(|n| ch.one_way_delay(n)).collect();
        assert!(delays.windows(2).all(|w| w[0] <= w[1]));
        assert!(delays[0] > 0);
    }

    #[test]
    fn jitter_stays_within_half_width_and_positive() {
        let cfg = ChannelConfig {
            base_delay_ms: 1,
            per_active_node_delay_ms: 0,
            jitter_ms: 2,
            ..quiet()
        };
        let mut ch = channel(cfg, 3);
        for _ in 0..1000 {
            let d = ch.one_way_delay(0);
            assert!((1..=3).contains(&d));
        }
    }

    #[test]
    fn handshake_is_three_legs() {
        let mut ch = channel(
            ChannelConfig {
                per_active_node_delay_ms: 0,
                ..quiet()
            },
            1,
        );
        assert_eq!(ch.config().handshake_legs(), 3);
        assert_eq!(ch.handshake(0), 15);
    }

    #[test]
    fn mean_delay_under_loss_matches_geometric_series() {
        let (p, rto, owd): (f64, f64, f64) = (0.5, 200.0, 7.0);
        // Sum over k lost attempts of p^k (1 - p) (k rto + owd).
        let series: f64 = (0..200)
            .map(|k| p.powi(k) * (1.0 - p) * (k as f64 * rto + owd))
            .sum();
        let closed = owd + rto * p / (1.0 - p);
        assert!((series - 207.0).abs() < 1e-9);
        assert!((closed - 207.0).abs() < 1e-12);

        let cfg = ChannelConfig {
            loss_probability: p,
            retransmit_timeout_ms: 200,
            ..quiet()
        };
        let mut ch = channel(cfg, 42);
        let n = 200_000;
        let total: u64 = (0..n).map(|_| ch.reliable(1).delay_ms).sum();
        let mean = total as f64 / n as f64;
        // Standard deviation of one draw is rto * sqrt(p) / (1 - p) ~ 283 ms.
        let se = 283.0 / (n as f64).sqrt();
        assert!((mean - 207.0).abs() < 5.0 * se, "mean {mean}");
    }

    #[test]
    fn datagrams_are_lost_not_retried() {
        let cfg = ChannelConfig {
            loss_probability: 0.5,
            ..quiet()
        };
        let mut ch = channel(cfg, 9);
        let got: Vec<Option<u64>> = (0..1000).map(|_| ch.datagram(0)).collect();
        let lost = got.iter().filter(|d| d.is_none()).count();
        assert!((400..600).contains(&lost));
        assert!(got.iter().flatten().all(|&d| d == 5));
    }

    #[test]
    fn loss_probability_domain() {
        let cfg = ChannelConfig {
            loss_probability: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        ChannelConfig::default().validate().unwrap();
    }
}
