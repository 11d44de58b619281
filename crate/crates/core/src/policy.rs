//! Choosing the next activity.
//!
//! Three mechanisms compete, in this order:
//!
//! 1. **Exploration.** Activities played fewer than `min_plays_per_activity`
//!    times are chosen first; otherwise, with probability
//!    `exploration_epsilon`, a uniformly random activity.
//! 2. **Drive override.** The drive `M_i = P_i - p_i(N_a)` measures how far the
//!    trailing emotion frequencies lag behind the character. When the largest
//!    `|M_k|` exceeds `drive_threshold`, the agent directly picks the peaked
//!    activity with the largest (`M_k > 0`) or smallest (`M_k < 0`) `p_k`,
//!    provided that activity lies on the correcting side of the target
//!    (`p_k > P_k` or `p_k < P_k` respectively).
//! 3. **Stochastic.** Sample an activity from the optimized weights `q`.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::emotion::{
    check_len, kl_divergence, Character, Distribution, EmotionFlags, EmotionSpace, ExperienceModel,
    MixtureWeights,
};
use crate::{Error, Result};

/// Identifier of the reward-receipt trait in `as_emotion` mode.
pub const UTILITY_TRAIT: &str = "U";

/// Trailing emotion frequencies over the last `N_a` episodes and the
/// resulting drive vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveState {
    window: usize,
    history: VecDeque<Distribution>,
    trailing: Distribution,
    drive: Vec<f64>,
}

impl DriveState {
    /// Empty history. The trailing frequencies start at the character
    /// target, so every drive is zero until evidence arrives.
    pub fn new(character: &Character, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("window_length", "must be positive"));
        }
        Ok(DriveState {
            window,
            history: VecDeque::with_capacity(window),
            trailing: character.target().clone(),
            drive: vec![0.0; character.space().len()],
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// `p(N_a)`.
    pub fn trailing(&self) -> &Distribution {
        &self.trailing
    }

    /// `M`.
    pub fn drive(&self) -> &[f64] {
        &self.drive
    }

    pub fn push(&mut self, character: &Character, emotion: &Distribution) -> Result<()> {
        let k = character.space().len();
        check_len(k, emotion.len())?;
        check_len(k, self.drive.len())?;
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(emotion.clone());

        let mut sum = vec![0.0; k];
        for e in &self.history {
            for (s, v) in sum.iter_mut().zip(e.values()) {
                *s += v;
            }
        }
        self.trailing = Distribution::from_weights(sum)?;
        for ((m, p), t) in self
            .drive
            .iter_mut()
            .zip(character.target().values())
            .zip(self.trailing.values())
        {
            *m = p - t;
        }
        Ok(())
    }
}

/// Pure form of [`DriveState::push`].
pub fn push_episode(state: &DriveState, character: &Character, emotion: &Distribution) -> Result<DriveState> {
    let mut next = state.clone();
    next.push(character, emotion)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityMode {
    /// Rewards are logged but carry no emotional weight.
    Off,
    /// Rewards are scaled by `exp(-lambda * D_a)`; `q` is not affected.
    Weighted,
    /// Reward receipt is an emotion trait of its own (`U`).
    AsEmotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub drive_threshold: f64,
    /// Minimum largest component for an activity to count as peaked.
    pub peakedness_threshold: f64,
    pub exploration_epsilon: f64,
    pub min_plays_per_activity: u64,
    pub utility_mode: UtilityMode,
    pub utility_lambda: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            drive_threshold: 0.25,
            peakedness_threshold: 0.5,
            exploration_epsilon: 0.05,
            min_plays_per_activity: 3,
            utility_mode: UtilityMode::Off,
            utility_lambda: 1.0,
        }
    }
}

impl PolicyConfig {
    /// Range checks for an emotion space with `k` traits.
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.drive_threshold >= 0.0 && self.drive_threshold.is_finite()) {
            return Err(Error::param("drive_threshold", "must be nonnegative"));
        }
        let lo = 1.0 / k as f64;
        if !(self.peakedness_threshold > lo && self.peakedness_threshold <= 1.0) {
            return Err(Error::param(
                "peakedness_threshold",
                format!("{} not in ({lo}, 1]", self.peakedness_threshold),
            ));
        }
        if !(0.0..1.0).contains(&self.exploration_epsilon) {
            return Err(Error::param("exploration_epsilon", "must lie in [0, 1)"));
        }
        if !(self.utility_lambda >= 0.0 && self.utility_lambda.is_finite()) {
            return Err(Error::param("utility_lambda", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Stochastic,
    DriveOverride,
    Exploration,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Stochastic => "stochastic",
            Mechanism::DriveOverride => "drive_override",
            Mechanism::Exploration => "exploration",
        })
    }
}

/// What was chosen, by which mechanism, and from which state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionTrace {
    pub activity: usize,
    pub mechanism: Mechanism,
    pub q: Vec<f64>,
    pub drive: Vec<f64>,
    /// Number of values drawn from the rng.
    pub draws: u32,
}

pub fn select_activity<R: Rng + ?Sized>(
    q: &MixtureWeights,
    models: &[ExperienceModel],
    state: &DriveState,
    config: &PolicyConfig,
    rng: &mut R,
) -> Result<SelectionTrace> {
    if models.is_empty() {
        return Err(Error::NoActivities);
    }
    check_len(models.len(), q.len())?;
    check_len(models[0].space().len(), state.drive().len())?;

    let mut draws = 0;
    let trace = |activity, mechanism, draws| SelectionTrace {
        activity,
        mechanism,
        q: q.as_slice().to_vec(),
        drive: state.drive().to_vec(),
        draws,
    };

    let underplayed: Vec<usize> = models
        .iter()
        .enumerate()
        .filter(|(_, m)| m.plays() < config.min_plays_per_activity)
        .map(|(a, _)| a)
        .collect();
    if !underplayed.is_empty() {
        let pick = underplayed[rng.random_range(0..underplayed.len())];
        return Ok(trace(pick, Mechanism::Exploration, 1));
    }
    if config.exploration_epsilon > 0.0 {
        draws += 1;
        if rng.random::<f64>() < config.exploration_epsilon {
            let pick = rng.random_range(0..models.len());
            return Ok(trace(pick, Mechanism::Exploration, draws + 1));
        }
    }

    if let Some(pick) = drive_override(models, state, config)? {
        return Ok(trace(pick, Mechanism::DriveOverride, draws));
    }

    let u: f64 = rng.random();
    draws += 1;
    Ok(trace(sample_index(q.as_slice(), u), Mechanism::Stochastic, draws))
}

/// The activity picked by direct drive reduction, if the drive is excessive
/// and some peaked activity would reduce it.
pub fn drive_override(
    models: &[ExperienceModel],
    state: &DriveState,
    config: &PolicyConfig,
) -> Result<Option<usize>> {
    let drive = state.drive();
    let mut k = 0;
    for (i, m) in drive.iter().enumerate() {
        if m.abs() > drive[k].abs() {
            k = i;
        }
    }
    let mk = drive[k];
    if mk.abs() <= config.drive_threshold {
        return Ok(None);
    }

    let mut best: Option<(usize, f64)> = None;
    for (a, model) in models.iter().enumerate() {
        let p = model.distribution()?;
        if p.max_component() < config.peakedness_threshold {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) if mk > 0.0 => p[k] > b,
            Some((_, b)) => p[k] < b,
        };
        if better {
            best = Some((a, p[k]));
        }
    }
    // P_k = M_k + p_k(N_a)
    let target = mk + state.trailing()[k];
    Ok(best
        .filter(|(_, pk)| if mk > 0.0 { *pk > target } else { *pk < target })
        .map(|(a, _)| a))
}

/// Inverse-CDF sample for `u` in `[0, 1)`.
fn sample_index(q: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (a, w) in q.iter().enumerate() {
        acc += w;
        if u < acc {
            return a;
        }
    }
    // rounding left u above the final cumulative sum
    q.iter().rposition(|w| *w > 0.0).unwrap_or(q.len() - 1)
}

/// `exp(-lambda * D(P || p^a))`: the weight applied to credits earned in an
/// activity. Equals 1 for activities that match the character exactly.
pub fn utility_weight(character: &Character, model: &ExperienceModel, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("utility_lambda", "must be nonnegative"));
    }
    if model.space() != character.space() {
        return Err(Error::SpaceMismatch);
    }
    let p = model.distribution()?;
    let d = kl_divergence(character.target(), &p)?;
    Ok((-lambda * d).exp())
}

/// Adds the reward-receipt flag `U` to the evaluator's raw flags and
/// normalizes. `fallback` receives the mass when no flag at all is raised.
pub fn record_utility_emotion(
    flags: &EmotionFlags,
    reward_received: bool,
    space: &EmotionSpace,
    mode: UtilityMode,
    fallback: usize,
) -> Result<Distribution> {
    if mode != UtilityMode::AsEmotion {
        return Err(Error::UtilityMode(format!(
            "utility emotion requires as_emotion mode, got {mode:?}"
        )));
    }
    check_len(space.len(), flags.len())?;
    let u = space
        .index_of(UTILITY_TRAIT)
        .ok_or_else(|| Error::UtilityMode(format!("emotion space lacks trait `{UTILITY_TRAIT}`")))?;
    let mut flags = flags.clone();
    if reward_received {
        flags.raise(u);
    } else {
        flags.clear(u);
    }
    Ok(flags.to_distribution(fallback))
}
