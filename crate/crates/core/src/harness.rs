//! The experiment loop.
//!
//! Every step runs
//! `select_activity -> simulate_episode -> evaluate_episode -> update_experience
//! -> push_episode`, and every `reoptimize_every` steps re-solves for the
//! selection weights, warm-started from the previous solution.
//!
//! A run is fully determined by its [`ExperimentConfig`] (including the
//! seed). Policy and environment draw from separate ChaCha streams, see
//! [`crate::rng`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::emotion::{
    kl_divergence, total_variation, Character, Distribution, EmotionSpace, ExperienceModel, MixtureWeights,
};
use crate::envs::{latent_distribution, raise_flags, simulate_episode, ActivitySpec, EpisodeRecord, EvaluatorConfig};
use crate::optimizer::{grid_oracle, optimize_weights, SolverConfig};
use crate::policy::{
    record_utility_emotion, select_activity, utility_weight, DriveState, Mechanism, PolicyConfig, UtilityMode,
    UTILITY_TRAIT,
};
use crate::rng::{stream, Stream, TaesRng};
use crate::{Error, Result};

/// Objective below which the character counts as reachable.
pub const FEASIBILITY_THRESHOLD: f64 = 1e-6;

/// Floor applied to warm-start weights so no activity is frozen at zero.
const WARM_START_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub traits: Vec<String>,
    /// Target frequency of every trait, in `traits` order.
    pub character: Vec<f64>,
    pub activities: Vec<ActivitySpec>,
    #[serde(default)]
    pub evaluator: EvaluatorConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Number of episodes `T`.
    pub horizon: u64,
    #[serde(default = "one")]
    pub reoptimize_every: u64,
    /// Trailing window `N_a` of the drive state.
    #[serde(default = "default_window")]
    pub window_length: usize,
    /// Additive smoothing of the experience models.
    #[serde(default = "default_prior")]
    pub prior_weight: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> u64 {
    1
}

fn default_window() -> usize {
    50
}

fn default_prior() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub timeline: String,
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            timeline: "timeline.csv".into(),
            summary: "summary.json".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let space = self.space()?;
        self.character()?;
        if self.activities.is_empty() {
            return Err(Error::NoActivities);
        }
        for (i, spec) in self.activities.iter().enumerate() {
            spec.validate()?;
            if self.activities[..i].iter().any(|s| s.id == spec.id) {
                return Err(Error::Config(format!("duplicate activity id `{}`", spec.id)));
            }
        }
        self.evaluator.validate()?;
        self.evaluator.trait_indices(&space)?;
        self.policy.validate(space.len())?;
        if self.policy.utility_mode == UtilityMode::AsEmotion && space.index_of(UTILITY_TRAIT).is_none() {
            return Err(Error::UtilityMode(format!(
                "as_emotion mode needs a `{UTILITY_TRAIT}` trait"
            )));
        }
        self.solver.validate()?;
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be positive"));
        }
        if self.reoptimize_every == 0 {
            return Err(Error::param("reoptimize_every", "must be positive"));
        }
        if self.window_length == 0 {
            return Err(Error::param("window_length", "must be positive"));
        }
        if !(self.prior_weight > 0.0 && self.prior_weight.is_finite()) {
            return Err(Error::param("prior_weight", "must be positive"));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<EmotionSpace> {
        EmotionSpace::new(self.traits.iter().cloned())
    }

    pub fn character(&self) -> Result<Character> {
        Character::new(self.space()?, self.character.clone())
    }

    /// Fresh experience models, one per activity, holding only the prior.
    pub fn initial_models(&self) -> Result<Vec<ExperienceModel>> {
        let space = self.space()?;
        self.activities
            .iter()
            .map(|a| ExperienceModel::new(space.clone(), a.id.clone(), self.prior_weight))
            .collect()
    }
}

/// Maps episodes to emotion vectors under an experiment's evaluator and
/// utility mode.
#[derive(Debug, Clone)]
pub struct EmotionEvaluator {
    space: EmotionSpace,
    config: EvaluatorConfig,
    mode: UtilityMode,
    fallback: usize,
}

impl EmotionEvaluator {
    pub fn new(space: EmotionSpace, config: EvaluatorConfig, mode: UtilityMode) -> Result<Self> {
        let [_, _, fallback] = config.trait_indices(&space)?;
        Ok(EmotionEvaluator {
            space,
            config,
            mode,
            fallback,
        })
    }

    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        Self::new(config.space()?, config.evaluator.clone(), config.policy.utility_mode)
    }

    pub fn evaluate(&self, ep: &EpisodeRecord, spec: &ActivitySpec) -> Result<Distribution> {
        let flags = raise_flags(ep, spec, &self.config, &self.space)?;
        match self.mode {
            UtilityMode::AsEmotion => {
                record_utility_emotion(&flags, ep.reward > 0.0, &self.space, self.mode, self.fallback)
            }
            UtilityMode::Off | UtilityMode::Weighted => Ok(flags.to_distribution(self.fallback)),
        }
    }
}

/// Everything that happened in one step, as logged to the timeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based.
    pub step: u64,
    pub activity: usize,
    pub mechanism: Mechanism,
    pub emotion: Distribution,
    /// Trailing frequencies after this episode.
    pub trailing: Distribution,
    /// Selection weights after this step's re-optimization.
    pub q: Vec<f64>,
    /// Divergence of the character from the mixture experience under `q`.
    pub objective: f64,
    pub drive: Vec<f64>,
    pub reward_raw: f64,
    pub reward_weighted: f64,
    pub tv: f64,
    /// `D(character || trailing)`; infinite while a trait is missing from
    /// the window.
    pub trailing_kl: f64,
}

/// Live state of one experiment.
pub struct Experiment {
    config: ExperimentConfig,
    character: Character,
    evaluator: EmotionEvaluator,
    models: Vec<ExperienceModel>,
    drive: DriveState,
    q: MixtureWeights,
    objective: f64,
    policy_rng: TaesRng,
    env_rng: TaesRng,
    step: u64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let character = config.character()?;
        let models = config.initial_models()?;
        let drive = DriveState::new(&character, config.window_length)?;
        let q = MixtureWeights::uniform(models.len());
        let objective = kl_divergence(
            character.target(),
            &crate::emotion::mixture_experience(&q, &models)?,
        )?;
        Ok(Experiment {
            evaluator: EmotionEvaluator::from_config(&config)?,
            policy_rng: stream(config.seed, Stream::Policy),
            env_rng: stream(config.seed, Stream::Environment),
            config,
            character,
            models,
            drive,
            q,
            objective,
            step: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn character(&self) -> &Character {
        &self.character
    }

    pub fn models(&self) -> &[ExperienceModel] {
        &self.models
    }

    pub fn drive(&self) -> &DriveState {
        &self.drive
    }

    pub fn weights(&self) -> &MixtureWeights {
        &self.q
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let selection = select_activity(
            &self.q,
            &self.models,
            &self.drive,
            &self.config.policy,
            &mut self.policy_rng,
        )?;
        let a = selection.activity;
        let spec = &self.config.activities[a];
        let mut episode = simulate_episode(spec, &mut self.env_rng);
        let emotion = self.evaluator.evaluate(&episode, spec)?;
        episode.emotion = Some(emotion.clone());

        self.models[a].observe(&emotion)?;
        self.drive.push(&self.character, &emotion)?;
        self.step += 1;

        if self.step.is_multiple_of(self.config.reoptimize_every) {
            let start = warm_start(&self.q);
            let result = optimize_weights(&self.character, &self.models, &self.config.solver, Some(&start))?;
            self.q = result.q_star;
            self.objective = result.objective;
        }

        let reward_weighted = match self.config.policy.utility_mode {
            UtilityMode::Weighted => {
                episode.reward * utility_weight(&self.character, &self.models[a], self.config.policy.utility_lambda)?
            }
            UtilityMode::Off | UtilityMode::AsEmotion => episode.reward,
        };

        let trailing = self.drive.trailing().clone();
        let target = self.character.target();
        let trailing_kl = if trailing.is_strict() {
            kl_divergence(target, &trailing)?
        } else {
            f64::INFINITY
        };
        Ok(StepRecord {
            step: self.step,
            activity: a,
            mechanism: selection.mechanism,
            emotion,
            tv: total_variation(&trailing, target)?,
            trailing,
            q: self.q.as_slice().to_vec(),
            objective: self.objective,
            drive: self.drive.drive().to_vec(),
            reward_raw: episode.reward,
            reward_weighted,
            trailing_kl,
        })
    }
}

fn warm_start(q: &MixtureWeights) -> MixtureWeights {
    let floored: Vec<f64> = q.as_slice().iter().map(|v| v.max(WARM_START_FLOOR)).collect();
    let sum: f64 = floored.iter().sum();
    MixtureWeights::from_normalized(floored.into_iter().map(|v| v / sum).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub traits: Vec<String>,
    pub activities: Vec<String>,
    pub horizon: u64,
    pub seed: u64,
    pub final_q: Vec<f64>,
    pub final_trailing: Vec<f64>,
    /// Nats.
    pub final_objective: f64,
    pub final_tv: f64,
    pub play_counts: Vec<u64>,
    pub mechanism_counts: MechanismCounts,
    pub reward_raw: f64,
    pub reward_weighted: f64,
    /// Number of final steps averaged below (10% of the horizon).
    pub tail_steps: u64,
    pub tail_mean_tv: f64,
    pub tail_mean_trailing_kl: f64,
    pub tail_mean_objective: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MechanismCounts {
    pub stochastic: u64,
    pub drive_override: u64,
    pub exploration: u64,
}

impl MechanismCounts {
    fn add(&mut self, m: Mechanism) {
        match m {
            Mechanism::Stochastic => self.stochastic += 1,
            Mechanism::DriveOverride => self.drive_override += 1,
            Mechanism::Exploration => self.exploration += 1,
        }
    }
}

/// Timeline header: step, activity_id, mechanism, emotion_*, trailing_*, q_*,
/// objective_nats, drive_*, reward_raw, reward_weighted.
pub fn timeline_header(config: &ExperimentConfig) -> Vec<String> {
    let mut h = vec!["step".to_string(), "activity_id".into(), "mechanism".into()];
    h.extend(config.traits.iter().map(|t| format!("emotion_{t}")));
    h.extend(config.traits.iter().map(|t| format!("trailing_{t}")));
    h.extend(config.activities.iter().map(|a| format!("q_{}", a.id)));
    h.push("objective_nats".into());
    h.extend(config.traits.iter().map(|t| format!("drive_{t}")));
    h.push("reward_raw".into());
    h.push("reward_weighted".into());
    h
}

fn timeline_row(config: &ExperimentConfig, r: &StepRecord) -> Vec<String> {
    let num = |v: &f64| v.to_string();
    let mut row = vec![
        r.step.to_string(),
        config.activities[r.activity].id.clone(),
        r.mechanism.to_string(),
    ];
    row.extend(r.emotion.values().iter().map(num));
    row.extend(r.trailing.values().iter().map(num));
    row.extend(r.q.iter().map(num));
    row.push(num(&r.objective));
    row.extend(r.drive.iter().map(num));
    row.push(num(&r.reward_raw));
    row.push(num(&r.reward_weighted));
    row
}

/// Runs the experiment, streaming the timeline CSV into `timeline` and
/// handing every step to `observe`.
pub fn run_with<W, F>(config: &ExperimentConfig, timeline: W, mut observe: F) -> Result<RunSummary>
where
    W: Write,
    F: FnMut(&Experiment, &StepRecord),
{
    let clock = Instant::now();
    let mut exp = Experiment::new(config.clone())?;
    let mut csv = csv::Writer::from_writer(timeline);
    csv.write_record(timeline_header(config))?;

    let horizon = config.horizon;
    let tail_steps = (horizon / 10).max(1);
    let tail_start = horizon - tail_steps;
    let mut plays = vec![0u64; config.activities.len()];
    let mut mechanisms = MechanismCounts::default();
    let (mut reward_raw, mut reward_weighted) = (0.0, 0.0);
    let (mut tail_tv, mut tail_kl, mut tail_obj) = (0.0, 0.0, 0.0);
    let mut last = None;

    for t in 0..horizon {
        let record = exp.step()?;
        csv.write_record(timeline_row(config, &record))?;
        plays[record.activity] += 1;
        mechanisms.add(record.mechanism);
        reward_raw += record.reward_raw;
        reward_weighted += record.reward_weighted;
        if t >= tail_start {
            tail_tv += record.tv;
            tail_kl += record.trailing_kl;
            tail_obj += record.objective;
        }
        observe(&exp, &record);
        last = Some(record);
    }
    csv.flush().map_err(|source| Error::Io {
        path: "timeline".into(),
        source,
    })?;

    let last = last.expect("horizon is positive");
    Ok(RunSummary {
        traits: config.traits.clone(),
        activities: config.activities.iter().map(|a| a.id.clone()).collect(),
        horizon,
        seed: config.seed,
        final_q: last.q,
        final_trailing: last.trailing.values().to_vec(),
        final_objective: last.objective,
        final_tv: last.tv,
        play_counts: plays,
        mechanism_counts: mechanisms,
        reward_raw,
        reward_weighted,
        tail_steps,
        tail_mean_tv: tail_tv / tail_steps as f64,
        tail_mean_trailing_kl: tail_kl / tail_steps as f64,
        tail_mean_objective: tail_obj / tail_steps as f64,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Runs the experiment and writes the timeline CSV and the JSON summary
/// into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let timeline_path = out_dir.join(&config.output.timeline);
    let file = File::create(&timeline_path).map_err(io(&timeline_path))?;
    let summary = run_with(config, BufWriter::new(file), |_, _| {}).map_err(|e| match e {
        Error::Csv(source) => Error::Io {
            path: timeline_path.display().to_string(),
            source: source.into(),
        },
        other => other,
    })?;

    let summary_path = out_dir.join(&config.output.summary);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, json + "\n").map_err(io(&summary_path))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// Whether the character lies (numerically) in the convex hull of the
    /// activity distributions.
    pub feasible: bool,
    pub min_objective: f64,
    pub q_star: MixtureWeights,
}

pub fn feasibility_report(
    character: &Character,
    models: &[ExperienceModel],
    solver: &SolverConfig,
) -> Result<FeasibilityReport> {
    let result = optimize_weights(character, models, solver, None)?;
    Ok(FeasibilityReport {
        feasible: result.objective <= FEASIBILITY_THRESHOLD,
        min_objective: result.objective,
        q_star: result.q_star,
    })
}

/// Experience models built from `episodes` simulated episodes per activity,
/// drawn from the estimation stream of the config's seed.
pub fn estimate_models(config: &ExperimentConfig, episodes: usize) -> Result<Vec<ExperienceModel>> {
    config.validate()?;
    let space = config.space()?;
    let evaluator = EmotionEvaluator::from_config(config)?;
    let mut rng = stream(config.seed, Stream::Estimation);
    config
        .activities
        .iter()
        .map(|spec| {
            let (_, counts) = latent_distribution(spec, episodes, &mut rng, |ep| evaluator.evaluate(ep, spec))?;
            ExperienceModel::with_counts(space.clone(), spec.id.clone(), counts, config.prior_weight)
        })
        .collect()
}

/// Solver against lattice oracle on the same models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub solver_objective: f64,
    pub oracle_objective: f64,
    pub solver_q: MixtureWeights,
    pub oracle_q: MixtureWeights,
    pub resolution: f64,
    /// `solver_objective <= oracle_objective + tolerance`.
    pub passed: bool,
}

pub fn oracle_report(
    character: &Character,
    models: &[ExperienceModel],
    solver: &SolverConfig,
    resolution: f64,
    tolerance: f64,
) -> Result<OracleReport> {
    let oracle = grid_oracle(character, models, resolution)?;
    let solved = optimize_weights(character, models, solver, None)?;
    Ok(OracleReport {
        passed: solved.objective <= oracle.objective + tolerance,
        solver_objective: solved.objective,
        oracle_objective: oracle.objective,
        solver_q: solved.q_star,
        oracle_q: oracle.q_star,
        resolution,
    })
}
