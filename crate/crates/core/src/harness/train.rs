//! Episodic training with greedy validation and early stopping.

use std::io;

use super::agents::network_shape;
use super::config::ExperimentConfig;
use super::scheme::Scheme;
use super::sim::{run_episode, AgentMode};
use crate::drl::{Learner, QNetwork};
use crate::error::{Error, Result};
use crate::rng;

/// One learning-curve row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub episode: u32,
    pub epsilon: f64,
    pub mean_loss: Option<f64>,
    pub episode_reward: f64,
    pub unsatisfied_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub scheme: Scheme,
    pub curve: Vec<CurveRow>,
    /// Episode whose parameters were kept.
    pub best_episode: u32,
    /// Mean greedy unsatisfied ratio of the kept parameters.
    pub best_score: f64,
    pub stopped_early: bool,
    pub train_steps: u64,
}

#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub scheme: Scheme,
    pub network: QNetwork,
    pub report: TrainingReport,
}

pub fn episode_seed(base: u64, episode: u32) -> u64 {
    rng::derive_seed(base, &format!("episode-{episode}"))
}

/// Whether the moving average of `rewards` over `window` episodes improved
/// by less than `min_improvement` (relative) during the last `patience`
/// episodes.
pub fn plateaued(rewards: &[f64], window: usize, patience: usize, min_improvement: f64) -> bool {
    if window == 0 || rewards.len() < window + patience {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let n = rewards.len();
    let now = mean(&rewards[n - window..]);
    let then = mean(&rewards[n - patience - window..n - patience]);
    now - then < min_improvement * then.abs().max(1e-12)
}

fn validate(config: &ExperimentConfig, scheme: Scheme, net: &QNetwork) -> Result<f64> {
    let seeds = &config.training.validation_seeds;
    let mut total = 0.0;
    for &seed in seeds {
        let r = run_episode(config, scheme, seed, config.training.cache_bytes, AgentMode::Frozen(net))?;
        total += r.snapshot.map_or(0.0, |s| s.unsatisfied_ratio);
    }
    Ok(total / seeds.len() as f64)
}

/// Trains `scheme` for at most `config.dqn.max_episodes` episodes and keeps
/// the parameters with the best greedy validation score.
pub fn train(config: &ExperimentConfig, scheme: Scheme) -> Result<TrainedAgent> {
    let shape = network_shape(config, scheme)
        .ok_or_else(|| Error::Config(format!("scheme {scheme} has no network to train")))?;
    config.validate()?;
    let mut episode_config = config.clone();
    episode_config.workload = config.training_workload();
    let tc = &config.training;
    let mut learner = Learner::new(shape, config.dqn.clone(), rng::derive_seed(tc.seed, scheme.name()));
    let max = config.dqn.max_episodes;
    let mut curve = Vec::new();
    let mut rewards = Vec::new();
    let mut best: Option<(f64, u32, QNetwork)> = None;
    let mut stopped_early = false;

    for episode in 1..=max {
        let epsilon = learner.schedule.epsilon(episode);
        let seed = episode_seed(tc.seed, episode);
        let r = run_episode(
            &episode_config,
            scheme,
            seed,
            tc.cache_bytes,
            AgentMode::Train {
                learner: &mut learner,
                epsilon,
            },
        )?;
        if !learner.online.all_finite() {
            return Err(Error::Divergence {
                step: learner.train_steps(),
            });
        }
        let reward = r.reward.unwrap_or(0.0);
        let unsatisfied = r.snapshot.map_or(0.0, |s| s.unsatisfied_ratio);
        rewards.push(reward);
        curve.push(CurveRow {
            episode,
            epsilon,
            mean_loss: r.mean_loss,
            episode_reward: reward,
            unsatisfied_ratio: unsatisfied,
        });

        let plateau = plateaued(
            &rewards,
            tc.plateau_window as usize,
            tc.plateau_patience as usize,
            tc.plateau_min_improvement,
        );
        let last = episode == max || plateau;
        if last || (tc.validate_every > 0 && episode % tc.validate_every == 0) {
            let score = if tc.validation_seeds.is_empty() {
                unsatisfied
            } else {
                validate(&episode_config, scheme, &learner.online)?
            };
            if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
                best = Some((score, episode, learner.online.clone()));
            }
            log::info!(
                "{scheme} episode {episode}: eps {epsilon:.3} reward {reward:.1} unsatisfied {unsatisfied:.4} validation {score:.4}"
            );
        }
        if plateau {
            stopped_early = episode < max;
            break;
        }
    }

    let (best_score, best_episode, network) = best.expect("at least one episode runs");
    Ok(TrainedAgent {
        scheme,
        network,
        report: TrainingReport {
            scheme,
            curve,
            best_episode,
            best_score,
            stopped_early,
            train_steps: learner.train_steps(),
        },
    })
}

/// Header `episode,epsilon,mean_loss,episode_reward,unsatisfied_ratio`.
pub fn write_curve_csv<W: io::Write>(curve: &[CurveRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["episode", "epsilon", "mean_loss", "episode_reward", "unsatisfied_ratio"])?;
    for r in curve {
        w.write_record([
            r.episode.to_string(),
            r.epsilon.to_string(),
            r.mean_loss.map_or_else(|| super::results::EMPTY.to_string(), |l| l.to_string()),
            r.episode_reward.to_string(),
            r.unsatisfied_ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.workload.horizon_slots = 120;
        c.dqn.min_replay = 64;
        c.training.validation_seeds = vec![5];
        c.training.validate_every = 2;
        c
    }

    #[test]
    fn plateau_rule() {
        let flat = vec![1.0; 400];
        assert!(plateaued(&flat, 100, 300, 0.01));
        assert!(!plateaued(&flat[..399], 100, 300, 0.01));
        let rising: Vec<f64> = (0..400).map(f64::from).collect();
        assert!(!plateaued(&rising, 100, 300, 0.01));
        let negative = vec![-5.0; 400];
        assert!(plateaued(&negative, 100, 300, 0.01));
    }

    #[test]
    fn single_episode_gives_valid_checkpoint() {
        let mut c = quick();
        c.dqn.max_episodes = 1;
        let agent = train(&c, Scheme::D3qn).unwrap();
        assert_eq!(agent.report.curve.len(), 1);
        assert_eq!(agent.report.best_episode, 1);
        assert_eq!(agent.report.curve[0].epsilon, 0.99);
        assert!(agent.network.all_finite());
        assert_eq!(agent.network.shape(), &network_shape(&c, Scheme::D3qn).unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let mut c = quick();
        c.dqn.max_episodes = 3;
        let a = train(&c, Scheme::CpDqn).unwrap();
        let b = train(&c, Scheme::CpDqn).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.network.params(), b.network.params());
        assert!(a.report.train_steps > 0);
    }

    #[test]
    fn curve_csv() {
        let rows = [CurveRow {
            episode: 1,
            epsilon: 0.99,
            mean_loss: None,
            episode_reward: 12.5,
            unsatisfied_ratio: 0.25,
        }];
        let mut buf = Vec::new();
        write_curve_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "episode,epsilon,mean_loss,episode_reward,unsatisfied_ratio\n1,0.99,NA,12.5,0.25\n"
        );
    }

    #[test]
    fn baselines_cannot_be_trained() {
        assert!(train(&quick(), Scheme::Lce).is_err());
    }
}
