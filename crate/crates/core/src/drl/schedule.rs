use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonConfig {
    pub start: f64,
    pub end: f64,
    pub decay: f64,
    /// Episodes run at `start` before decay begins.
    pub warmup_episodes: u32,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        EpsilonConfig {
            start: 0.99,
            end: 0.01,
            decay: 0.997,
            warmup_episodes: 100,
        }
    }
}

/// Per-episode exploration rate: held at `start` for the warmup episodes,
/// then multiplied by `decay` once per episode down to `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSchedule {
    config: EpsilonConfig,
    current: f64,
    episode: u32,
}

impl EpsilonSchedule {
    pub fn new(config: EpsilonConfig) -> Self {
        assert!(
            (0.0..=1.0).contains(&config.end)
                && config.end <= config.start
                && config.start <= 1.0,
            "epsilon bounds must satisfy 0 <= end <= start <= 1"
        );
        EpsilonSchedule {
            config,
            current: config.start,
            episode: 0,
        }
    }

    pub fn config(&self) -> &EpsilonConfig {
        &self.config
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Exploration rate for `episode` (1-based). Episodes are normally
    /// visited in order; asking for an earlier one replays from the start.
    pub fn epsilon(&mut self, episode: u32) -> f64 {
        let episode = episode.max(1);
        if episode < self.episode {
            self.current = self.config.start;
            self.episode = 0;
        }
        while self.episode < episode {
            self.episode += 1;
            if self.episode > self.config.warmup_episodes {
                self.current = (self.current * self.config.decay).max(self.config.end);
            }
        }
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_holds_start() {
        let mut s = EpsilonSchedule::new(EpsilonConfig::default());
        for e in 1..=100 {
            assert_eq!(s.epsilon(e), 0.99);
        }
    }

    #[test]
    fn first_decay_step() {
        let mut s = EpsilonSchedule::new(EpsilonConfig::default());
        assert!((s.epsilon(101) - 0.98703).abs() < 1e-12);
    }

    #[test]
    fn floor_after_1530_decays() {
        let cfg = EpsilonConfig::default();
        // Smallest k with 0.99 * 0.997^k <= 0.01.
        let k = ((cfg.end / cfg.start).ln() / cfg.decay.ln()).ceil() as u32;
        assert_eq!(k, 1530);
        let mut s = EpsilonSchedule::new(cfg);
        assert!(s.epsilon(100 + k - 1) > 0.01);
        assert_eq!(s.epsilon(100 + k), 0.01);
        assert_eq!(s.epsilon(3000), 0.01);
    }

    #[test]
    fn non_increasing_and_bounded() {
        let mut s = EpsilonSchedule::new(EpsilonConfig {
            warmup_episodes: 3,
            decay: 0.9,
            ..EpsilonConfig::default()
        });
        let mut prev = f64::INFINITY;
        for e in 1..200 {
            let v = s.epsilon(e);
            assert!(v <= prev && (0.01..=0.99).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn rewinding_replays_from_start() {
        let mut s = EpsilonSchedule::new(EpsilonConfig::default());
        let late = s.epsilon(500);
        assert_eq!(s.epsilon(10), 0.99);
        assert_eq!(s.epsilon(500), late);
    }
}
