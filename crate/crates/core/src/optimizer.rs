//! Alignment of experience with character.
//!
//! The objective is `f(q) = D(P || sum_a q_a p^a)`, the divergence of the
//! character `P` from the mixture experience, minimised over the activity
//! simplex. `f` is convex in `q`, so every local minimum is global.
//!
//! [`optimize_weights`] runs exponentiated gradient (entropic mirror descent):
//!
//! ```text
//! q_a <- q_a * exp(-eta * df/dq_a),   then renormalize
//! df/dq_a = -sum_i P_i p^a_i / m_i,   m = sum_b q_b p^b
//! ```
//!
//! with step halving whenever a trial step would increase `f`, which makes
//! the objective sequence nonincreasing. [`grid_oracle`] evaluates `f` on a
//! simplex lattice and exists to check the solver.

use serde::{Deserialize, Serialize};

use crate::emotion::{
    check_len, kl_divergence, mixture_experience, Character, ExperienceModel, MixtureWeights,
};
use crate::{Error, Result};

/// Maximum number of step halvings tried per iteration.
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once one iteration lowers the objective by less than this.
    pub tolerance: f64,
    /// Exponentiated-gradient learning rate.
    pub step_size: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 10_000,
            tolerance: 1e-10,
            step_size: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::param("step_size", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub q_star: MixtureWeights,
    /// Divergence at `q_star`, in nats.
    pub objective: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Objective after every accepted iterate, starting with the initial
    /// point. Nonincreasing.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// `f(q)` together with its gradient, for a fixed character and fixed
/// experience models.
#[derive(Debug, Clone)]
pub struct AlignmentObjective {
    target: Vec<f64>,
    /// `columns[a][i] = p^a_i`
    columns: Vec<Vec<f64>>,
}

impl AlignmentObjective {
    pub fn new(character: &Character, models: &[ExperienceModel]) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::NoActivities);
        }
        let mut columns = Vec::with_capacity(models.len());
        for model in models {
            if model.space() != character.space() {
                return Err(Error::SpaceMismatch);
            }
            let p = model.distribution()?;
            p.require_strict()?;
            columns.push(p.values().to_vec());
        }
        Ok(AlignmentObjective {
            target: character.target().values().to_vec(),
            columns,
        })
    }

    pub fn num_activities(&self) -> usize {
        self.columns.len()
    }

    fn mixture(&self, q: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.target.len()];
        for (qa, col) in q.iter().zip(&self.columns) {
            for (mi, pi) in m.iter_mut().zip(col) {
                *mi += qa * pi;
            }
        }
        m
    }

    /// `f(q)`. Also defined off the simplex for any nonnegative `q` with
    /// positive mixture.
    pub fn value(&self, q: &[f64]) -> f64 {
        let m = self.mixture(q);
        self.target
            .iter()
            .zip(&m)
            .map(|(p, mi)| p * (p / mi).ln())
            .sum()
    }

    /// Partial derivatives `df/dq_a = -sum_i P_i p^a_i / m_i`.
    pub fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let m = self.mixture(q);
        let ratio: Vec<f64> = self.target.iter().zip(&m).map(|(p, mi)| p / mi).collect();
        self.columns
            .iter()
            .map(|col| -col.iter().zip(&ratio).map(|(pi, r)| pi * r).sum::<f64>())
            .collect()
    }

    /// Frank-Wolfe gap `<g, q> - min_a g_a`, an upper bound on
    /// `f(q) - min f`.
    pub fn duality_gap(&self, q: &[f64]) -> f64 {
        let g = self.gradient(q);
        let inner: f64 = g.iter().zip(q).map(|(a, b)| a * b).sum();
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        (inner - min).max(0.0)
    }
}

/// Minimises `D(character || mixture_experience(q, models))` over the
/// simplex. Starts from `initial` or the uniform weights.
///
/// Coordinates that are exactly zero in `initial` stay zero.
pub fn optimize_weights(
    character: &Character,
    models: &[ExperienceModel],
    config: &SolverConfig,
    initial: Option<&MixtureWeights>,
) -> Result<SolverResult> {
    config.validate()?;
    let objective = AlignmentObjective::new(character, models)?;
    let n = models.len();
    let mut q = match initial {
        Some(w) => {
            check_len(n, w.len())?;
            w.as_slice().to_vec()
        }
        None => vec![1.0 / n as f64; n],
    };

    let mut f = objective.value(&q);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    if n == 1 {
        return Ok(SolverResult {
            q_star: MixtureWeights::from_normalized(q),
            objective: f.max(0.0),
            iterations_used: 0,
            converged: true,
            trace,
        });
    }

    let mut candidate = vec![0.0; n];
    while iterations < config.max_iterations {
        iterations += 1;
        let g = objective.gradient(&q);
        // shifting by min g leaves the normalized update unchanged and keeps
        // every exponent <= 0
        let g_min = g.iter().copied().fold(f64::INFINITY, f64::min);

        let mut eta = config.step_size;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for ((c, qa), ga) in candidate.iter_mut().zip(&q).zip(&g) {
                *c = qa * (-eta * (ga - g_min)).exp();
            }
            let sum: f64 = candidate.iter().sum();
            for c in candidate.iter_mut() {
                *c /= sum;
            }
            let fc = objective.value(&candidate);
            if fc <= f {
                accepted = Some(fc);
                break;
            }
            eta *= 0.5;
        }

        let Some(fc) = accepted else {
            // no descent direction left at machine precision
            converged = true;
            break;
        };
        let decrease = f - fc;
        std::mem::swap(&mut q, &mut candidate);
        f = fc;
        trace.push(f);
        if decrease < config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(SolverResult {
        q_star: MixtureWeights::from_normalized(q),
        objective: f.max(0.0),
        iterations_used: iterations,
        converged,
        trace,
    })
}

/// Exhaustive search over the simplex lattice `{k / n : sum k = n}` with
/// `n = round(1 / resolution)`. At most four activities.
pub fn grid_oracle(
    character: &Character,
    models: &[ExperienceModel],
    resolution: f64,
) -> Result<SolverResult> {
    if models.is_empty() {
        return Err(Error::NoActivities);
    }
    if models.len() > 4 {
        return Err(Error::OracleTooLarge(models.len()));
    }
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(Error::param("resolution", format!("{resolution} not in (0, 0.5]")));
    }
    let steps = (1.0 / resolution).round() as usize;
    let n = models.len();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluated = 0;
    let mut counts = vec![0usize; n];
    let mut visit = |counts: &[usize]| -> Result<()> {
        let q: Vec<f64> = counts.iter().map(|k| *k as f64 / steps as f64).collect();
        let weights = MixtureWeights::new(q)?;
        let value = kl_divergence(character.target(), &mixture_experience(&weights, models)?)?;
        evaluated += 1;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, weights.as_slice().to_vec()));
        }
        Ok(())
    };
    compositions(steps, 0, &mut counts, &mut visit)?;

    let (objective, q) = best.expect("lattice is never empty");
    Ok(SolverResult {
        q_star: MixtureWeights::from_normalized(q),
        objective,
        iterations_used: evaluated,
        converged: true,
        trace: vec![objective],
    })
}

fn compositions(
    remaining: usize,
    slot: usize,
    counts: &mut [usize],
    visit: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if slot + 1 == counts.len() {
        counts[slot] = remaining;
        return visit(counts);
    }
    for k in 0..=remaining {
        counts[slot] = k;
        compositions(remaining - k, slot + 1, counts, visit)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::{Distribution, EmotionSpace};
    use approx::assert_abs_diff_eq;

    fn instance(target: &[f64], ps: &[&[f64]]) -> (Character, Vec<ExperienceModel>) {
        let names: Vec<String> = (0..target.len()).map(|i| format!("e{i}")).collect();
        let space = EmotionSpace::new(names).unwrap();
        let character = Character::new(space.clone(), target.to_vec()).unwrap();
        let models = ps
            .iter()
            .enumerate()
            .map(|(a, p)| ExperienceModel::with_counts(space.clone(), format!("a{a}"), p.to_vec(), 0.0).unwrap())
            .collect();
        (character, models)
    }

    #[test]
    fn single_activity_is_trivial() {
        let (c, m) = instance(&[0.6, 0.4], &[&[0.3, 0.7]]);
        let r = optimize_weights(&c, &m, &SolverConfig::default(), None).unwrap();
        assert_eq!(r.q_star.as_slice(), &[1.0]);
        let expected = kl_divergence(c.target(), &Distribution::new(vec![0.3, 0.7]).unwrap()).unwrap();
        assert_abs_diff_eq!(r.objective, expected, epsilon = 1e-15);
        assert!(r.converged);
    }

    #[test]
    fn interior_optimum() {
        let (c, m) = instance(&[0.6, 0.4], &[&[0.9, 0.1], &[0.1, 0.9]]);
        let r = optimize_weights(&c, &m, &SolverConfig::default(), None).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.q_star[0], 0.625, epsilon = 1e-4);
        assert_abs_diff_eq!(r.q_star[1], 0.375, epsilon = 1e-4);
        assert!(r.objective < 1e-8);

        let g = grid_oracle(&c, &m, 0.005).unwrap();
        assert!(g.objective < 1e-4);
        assert_abs_diff_eq!(g.q_star[0], 0.625, epsilon = 1e-12);
    }

    #[test]
    fn boundary_optimum() {
        let (c, m) = instance(&[0.9, 0.1], &[&[0.5, 0.5], &[0.4, 0.6]]);
        let r = optimize_weights(&c, &m, &SolverConfig::default(), None).unwrap();
        let expected = 0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln();
        assert_abs_diff_eq!(expected, 0.368, epsilon = 1e-3);
        assert_abs_diff_eq!(r.objective, expected, epsilon = 1e-8);
        assert!(r.q_star[0] > 1.0 - 1e-4);

        let g = grid_oracle(&c, &m, 0.01).unwrap();
        assert_eq!(g.q_star.as_slice(), &[1.0, 0.0]);
        assert!(r.objective <= g.objective + 1e-9);
    }

    #[test]
    fn objective_matches_kl_of_mixture() {
        let (c, m) = instance(&[0.5, 0.3, 0.2], &[&[0.7, 0.2, 0.1], &[0.1, 0.3, 0.6], &[0.2, 0.6, 0.2]]);
        let r = optimize_weights(&c, &m, &SolverConfig::default(), None).unwrap();
        let direct = kl_divergence(c.target(), &mixture_experience(&r.q_star, &m).unwrap()).unwrap();
        assert_abs_diff_eq!(r.objective, direct, epsilon = 1e-9);
        let sum: f64 = r.q_star.as_slice().iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn zero_start_coordinates_stay_zero() {
        let (c, m) = instance(&[0.6, 0.4], &[&[0.9, 0.1], &[0.1, 0.9]]);
        let init = MixtureWeights::indicator(2, 0);
        let r = optimize_weights(&c, &m, &SolverConfig::default(), Some(&init)).unwrap();
        assert_eq!(r.q_star.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (c, m) = instance(&[0.6, 0.4], &[&[0.9, 0.1], &[0.1, 0.9]]);
        assert!(matches!(
            optimize_weights(&c, &[], &SolverConfig::default(), None),
            Err(Error::NoActivities)
        ));
        let (_, bad) = instance(&[0.6, 0.4], &[&[1.0, 0.0]]);
        assert!(matches!(
            optimize_weights(&c, &bad, &SolverConfig::default(), None),
            Err(Error::NotStrict { .. })
        ));
        let cfg = SolverConfig {
            step_size: 0.0,
            ..SolverConfig::default()
        };
        assert!(optimize_weights(&c, &m, &cfg, None).is_err());
        assert!(optimize_weights(&c, &m, &SolverConfig::default(), Some(&MixtureWeights::uniform(3))).is_err());
    }

    #[test]
    fn oracle_guards() {
        let (c, m) = instance(&[0.6, 0.4], &[&[0.9, 0.1] as &[f64]; 5]);
        assert!(matches!(grid_oracle(&c, &m, 0.1), Err(Error::OracleTooLarge(5))));
        assert!(grid_oracle(&c, &m[..1], 0.0).is_err());
        assert!(grid_oracle(&c, &m[..1], 0.6).is_err());
        let r = grid_oracle(&c, &m[..1], 0.5).unwrap();
        assert_eq!(r.q_star.as_slice(), &[1.0]);
    }

    #[test]
    fn duality_gap_bounds_suboptimality() {
        let (c, m) = instance(&[0.5, 0.3, 0.2], &[&[0.7, 0.2, 0.1], &[0.1, 0.3, 0.6], &[0.2, 0.6, 0.2]]);
        let obj = AlignmentObjective::new(&c, &m).unwrap();
        let best = optimize_weights(&c, &m, &SolverConfig::default(), None).unwrap().objective;
        for q in [[1.0, 0.0, 0.0], [0.2, 0.3, 0.5], [1.0 / 3.0; 3]] {
            assert!(obj.value(&q) - best <= obj.duality_gap(&q) + 1e-12);
        }
    }
}
