//! Synthetic activities and the emotional evaluation of their episodes.
//!
//! Games produce a win-probability trajectory: a Gaussian random walk clamped
//! to `[0, 1]`, started at `0.5 + skill_edge / 2`. The game is won with the
//! final probability. Chats have no trajectory; the question is answered with
//! probability `0.5 + skill_edge / 2`.
//!
//! Evaluation raises flags:
//!
//! | flag | game | chat |
//! |------|------|------|
//! | satisfaction | won | answered |
//! | challenge | `min(trajectory) < challenge_threshold` | never |
//! | boredom | `min(trajectory) >= boredom_floor` or overly long | overly long |
//!
//! where overly long means `length > boredom_length_factor * mean_length`.
//! The unit of emotional mass is split evenly over the raised flags. An
//! episode that raises nothing counts as boring.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::emotion::{Distribution, EmotionFlags, EmotionSpace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Game,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivitySpec {
    pub id: String,
    pub kind: ActivityKind,
    /// Latent advantage of the agent, in `(-1, 1)`.
    pub skill_edge: f64,
    /// Standard deviation of one trajectory step.
    #[serde(default)]
    pub volatility: f64,
    /// Mean episode length (plies or exchanges), at least 2.
    pub mean_length: u32,
    #[serde(default = "default_reward")]
    pub reward_on_success: f64,
}

fn default_reward() -> f64 {
    1.0
}

impl ActivitySpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::param("id", "activity id is empty"));
        }
        if !(self.skill_edge > -1.0 && self.skill_edge < 1.0) {
            return Err(Error::param("skill_edge", format!("{} not in (-1, 1)", self.skill_edge)));
        }
        if !(self.volatility >= 0.0 && self.volatility.is_finite()) {
            return Err(Error::param("volatility", "must be nonnegative"));
        }
        if self.mean_length < 2 {
            return Err(Error::param("mean_length", "must be at least 2"));
        }
        if !(self.reward_on_success >= 0.0 && self.reward_on_success.is_finite()) {
            return Err(Error::param("reward_on_success", "must be nonnegative"));
        }
        Ok(())
    }

    /// Starting win probability (game) or answer probability (chat).
    pub fn base_probability(&self) -> f64 {
        0.5 + self.skill_edge / 2.0
    }
}

/// One completed episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub activity: String,
    pub kind: ActivityKind,
    /// Win probability after every ply; empty for chats.
    pub trajectory: Vec<f64>,
    pub length: u32,
    /// Won (game) or answered (chat).
    pub success: bool,
    pub reward: f64,
    /// Filled in by the caller once the episode has been evaluated.
    pub emotion: Option<Distribution>,
}

pub fn simulate_episode<R: Rng + ?Sized>(spec: &ActivitySpec, rng: &mut R) -> EpisodeRecord {
    let length = episode_length(spec.mean_length, rng);
    let start = spec.base_probability();
    let (trajectory, success) = match spec.kind {
        ActivityKind::Game => {
            let mut x = start;
            let mut trajectory = Vec::with_capacity(length as usize);
            trajectory.push(x);
            for _ in 1..length {
                if spec.volatility > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    x = (x + spec.volatility * z).clamp(0.0, 1.0);
                }
                trajectory.push(x);
            }
            let won = rng.random::<f64>() < x;
            (trajectory, won)
        }
        ActivityKind::Chat => (Vec::new(), rng.random::<f64>() < start),
    };
    EpisodeRecord {
        activity: spec.id.clone(),
        kind: spec.kind,
        trajectory,
        length,
        success,
        reward: if success { spec.reward_on_success } else { 0.0 },
        emotion: None,
    }
}

/// Geometric number of trials with mean `mean_length`, clamped to >= 2.
fn episode_length<R: Rng + ?Sized>(mean_length: u32, rng: &mut R) -> u32 {
    let p = 1.0 / mean_length as f64;
    let u: f64 = rng.random();
    let trials = ((1.0 - u).ln() / (1.0 - p).ln()).ceil();
    if trials.is_finite() {
        (trials.min(u32::MAX as f64) as u32).max(2)
    } else {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorConfig {
    /// Challenge when the win probability ever drops below this.
    pub challenge_threshold: f64,
    /// Boredom when the win probability never drops below this.
    pub boredom_floor: f64,
    /// Boredom when the episode is longer than this many mean lengths.
    pub boredom_length_factor: f64,
    pub satisfaction_trait: String,
    pub challenge_trait: String,
    pub boredom_trait: String,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        EvaluatorConfig {
            challenge_threshold: 0.2,
            boredom_floor: 0.7,
            boredom_length_factor: 2.0,
            satisfaction_trait: "S".into(),
            challenge_trait: "C".into(),
            boredom_trait: "B".into(),
        }
    }
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.challenge_threshold > 0.0 && self.challenge_threshold < 0.5) {
            return Err(Error::param("challenge_threshold", "must lie in (0, 0.5)"));
        }
        if !(self.boredom_floor > 0.5 && self.boredom_floor < 1.0) {
            return Err(Error::param("boredom_floor", "must lie in (0.5, 1)"));
        }
        if !(self.boredom_length_factor > 1.0 && self.boredom_length_factor.is_finite()) {
            return Err(Error::param("boredom_length_factor", "must exceed 1"));
        }
        Ok(())
    }

    /// Indices of the satisfaction, challenge and boredom traits.
    pub fn trait_indices(&self, space: &EmotionSpace) -> Result<[usize; 3]> {
        Ok([
            space.require(&self.satisfaction_trait)?,
            space.require(&self.challenge_trait)?,
            space.require(&self.boredom_trait)?,
        ])
    }
}

/// The raw flags of an episode, before normalization.
pub fn raise_flags(
    ep: &EpisodeRecord,
    spec: &ActivitySpec,
    config: &EvaluatorConfig,
    space: &EmotionSpace,
) -> Result<EmotionFlags> {
    let [s, c, b] = config.trait_indices(space)?;
    let mut flags = EmotionFlags::new(space.len());
    if ep.success {
        flags.raise(s);
    }
    if ep.kind == ActivityKind::Game {
        let low = ep
            .trajectory
            .iter()
            .copied()
            .reduce(f64::min)
            .ok_or_else(|| Error::InvalidEpisode("game episode without trajectory".into()))?;
        if low < config.challenge_threshold {
            flags.raise(c);
        }
        if low >= config.boredom_floor {
            flags.raise(b);
        }
    }
    if ep.length as f64 > config.boredom_length_factor * spec.mean_length as f64 {
        flags.raise(b);
    }
    Ok(flags)
}

/// The normalized emotion vector of an episode. Deterministic.
pub fn evaluate_episode(
    ep: &EpisodeRecord,
    spec: &ActivitySpec,
    config: &EvaluatorConfig,
    space: &EmotionSpace,
) -> Result<Distribution> {
    let flags = raise_flags(ep, spec, config, space)?;
    Ok(flags.to_distribution(space.require(&config.boredom_trait)?))
}

/// Mean emotion vector over `episodes` simulated episodes, together with the
/// summed vectors (usable as experience counts).
pub fn latent_distribution<R, F>(
    spec: &ActivitySpec,
    episodes: usize,
    rng: &mut R,
    mut evaluate: F,
) -> Result<(Distribution, Vec<f64>)>
where
    R: Rng + ?Sized,
    F: FnMut(&EpisodeRecord) -> Result<Distribution>,
{
    if episodes == 0 {
        return Err(Error::param("episodes", "must be positive"));
    }
    let mut sums: Vec<f64> = Vec::new();
    for _ in 0..episodes {
        let ep = simulate_episode(spec, rng);
        let e = evaluate(&ep)?;
        if sums.is_empty() {
            sums = vec![0.0; e.len()];
        }
        for (s, v) in sums.iter_mut().zip(e.values()) {
            *s += v;
        }
    }
    Ok((Distribution::from_weights(sums.clone())?, sums))
}
